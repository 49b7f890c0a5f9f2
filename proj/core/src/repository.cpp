#include "celltrail/repository.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <fstream>
#include <json.hpp>

namespace celltrail {
namespace repo {

namespace fs = std::filesystem;
using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string random_token(int bits) {
    const int bytes = (bits + 7) / 8;
    std::vector<unsigned char> buf(static_cast<std::size_t>(bytes));
    if (RAND_bytes(buf.data(), bytes) != 1)
        throw RepoError(RepoErrc::BadConfig, "system entropy source failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(buf.size() * 2);
    for (unsigned char b : buf) {
        out.push_back(hex[b >> 4]);
        out.push_back(hex[b & 0xF]);
    }
    return out;
}

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw RepoError(RepoErrc::CorruptVersion, "cannot read " + p.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return data;
}

void write_file_atomic(const fs::path& p, std::string_view data) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) throw RepoError(RepoErrc::BadConfig, "cannot write " + tmp.string());
    }
    fs::rename(tmp, p);
}

struct LeaseState {
    Lease lease;
    std::set<std::string> superseded_tokens;
};

struct FileState {
    std::int64_t file_id = 0;
    std::string name;
    std::vector<Version> versions;
};

}  // namespace

struct Repository::State {
    mutable std::mutex mu;
    RepoConfig config;
    std::int64_t next_file_id = 1;
    std::map<std::int64_t, FileState> files;
    std::set<std::string> global_admins;
    std::map<std::pair<std::string, std::int64_t>, Privileges> privileges;
    std::map<std::int64_t, LeaseState> leases;          // by file id
    std::map<std::string, std::int64_t> current_tokens;  // token -> file id
    std::map<std::string, std::int64_t> stale_tokens;    // superseded -> file id
    std::set<std::string> issued_tokens;                 // everything ever handed out

    fs::path catalog_path() const { return config.root / "catalog.json"; }
    fs::path security_log_path() const { return config.root / "security.log"; }
    fs::path file_dir(std::int64_t id) const {
        return config.root / "files" / std::to_string(id);
    }
    fs::path version_path(std::int64_t id, std::int64_t seq) const {
        return file_dir(id) / ("v" + std::to_string(seq) + ".bin");
    }
    fs::path versions_json_path(std::int64_t id) const { return file_dir(id) / "versions.json"; }

    std::string fresh_token() {
        for (;;) {
            std::string t = random_token(config.token_bits);
            if (issued_tokens.insert(t).second) return t;
        }
    }

    void persist_catalog() const {
        json privs = json::array();
        for (const auto& [key, p] : privileges) {
            privs.push_back({{"user", key.first},
                             {"file_id", key.second},
                             {"edit", p.edit},
                             {"view", p.view},
                             {"audit", p.audit},
                             {"download", p.download},
                             {"admin", p.admin}});
        }
        json lease_list = json::array();
        for (const auto& [fid, ls] : leases) {
            lease_list.push_back({{"file_id", fid},
                                  {"user", ls.lease.user},
                                  {"session_token", ls.lease.session_token},
                                  {"otp", ls.lease.otp},
                                  {"acquired_at", ls.lease.acquired_at.seconds},
                                  {"last_activity", ls.lease.last_activity.seconds},
                                  {"superseded", ls.superseded_tokens}});
        }
        json file_list = json::array();
        for (const auto& [fid, f] : files) file_list.push_back({{"file_id", fid}, {"name", f.name}});
        const json doc = {{"format", 1},
                          {"inactivity_timeout_seconds", config.inactivity_timeout_seconds},
                          {"token_bits", config.token_bits},
                          {"next_file_id", next_file_id},
                          {"admins", global_admins},
                          {"files", file_list},
                          {"privileges", privs},
                          {"leases", lease_list}};
        write_file_atomic(catalog_path(), doc.dump(2) + "\n");
    }

    void persist_versions(const FileState& f) const {
        json list = json::array();
        for (const auto& v : f.versions) {
            list.push_back({{"seq", v.seq},
                            {"author", v.author},
                            {"saved_at", render_timestamp(v.saved_at)},
                            {"checksum", v.checksum},
                            {"size", v.size}});
        }
        write_file_atomic(versions_json_path(f.file_id), list.dump(2) + "\n");
    }

    void append_security_log(Timestamp now, const std::string& event, const std::string& user,
                             std::optional<std::int64_t> file_id) {
        std::ofstream out(security_log_path(), std::ios::app);
        out << render_timestamp(now) << ' ' << event << " user=" << user;
        if (file_id) out << " file=" << *file_id;
        out << '\n';
    }

    FileState& file_or_throw(std::int64_t id) {
        const auto it = files.find(id);
        if (it == files.end())
            throw RepoError(RepoErrc::UnknownFile, "unknown file id " + std::to_string(id));
        return it->second;
    }

    const FileState& file_or_throw(std::int64_t id) const {
        const auto it = files.find(id);
        if (it == files.end())
            throw RepoError(RepoErrc::UnknownFile, "unknown file id " + std::to_string(id));
        return it->second;
    }

    Privileges effective(const std::string& user, std::int64_t file_id) const {
        Privileges p;
        if (global_admins.count(user)) {
            p.edit = p.view = p.audit = p.download = p.admin = true;
            return p;
        }
        const auto it = privileges.find({user, file_id});
        if (it != privileges.end()) p = it->second;
        if (p.admin) p.edit = p.view = p.audit = p.download = true;
        if (p.edit) p.view = true;
        return p;
    }

    bool is_admin_for(const std::string& user, std::int64_t file_id) const {
        return global_admins.count(user) > 0 || effective(user, file_id).admin;
    }

    /// Releases a lease and forgets its token history.
    Lease drop_lease(std::int64_t file_id) {
        const auto it = leases.find(file_id);
        Lease out = it->second.lease;
        current_tokens.erase(it->second.lease.session_token);
        for (const auto& t : it->second.superseded_tokens) stale_tokens.erase(t);
        leases.erase(it);
        return out;
    }

    Version store_version(FileState& f, const std::string& author, const std::string& bytes,
                          Timestamp now) {
        Version v;
        v.seq = static_cast<std::int64_t>(f.versions.size()) + 1;
        v.author = author;
        v.saved_at = now;
        v.checksum = sha256_hex(bytes);
        v.size = bytes.size();
        fs::create_directories(file_dir(f.file_id));
        write_file_atomic(version_path(f.file_id, v.seq), bytes);
        f.versions.push_back(v);
        persist_versions(f);
        return v;
    }
};

Repository::Repository() : state_(std::make_unique<State>()) {}
Repository::Repository(Repository&&) noexcept = default;
Repository& Repository::operator=(Repository&&) noexcept = default;
Repository::~Repository() = default;

Repository Repository::init(const RepoConfig& config) {
    if (config.inactivity_timeout_seconds <= 0)
        throw RepoError(RepoErrc::BadConfig, "inactivity timeout must be positive");
    if (config.token_bits < 128)
        throw RepoError(RepoErrc::BadConfig, "session tokens require at least 128 bits");
    if (fs::exists(config.root) && !fs::is_empty(config.root))
        throw RepoError(RepoErrc::PathNotEmpty,
                        "repository root is not empty: " + config.root.string());
    fs::create_directories(config.root / "files");

    Repository repo;
    repo.state_->config = config;
    repo.state_->persist_catalog();
    std::ofstream(repo.state_->security_log_path(), std::ios::app);
    return repo;
}

Repository Repository::open(const fs::path& root) {
    Repository repo;
    auto& st = *repo.state_;
    st.config.root = root;
    const fs::path catalog = root / "catalog.json";
    if (!fs::exists(catalog))
        throw RepoError(RepoErrc::BadConfig, "no repository at " + root.string());
    const json doc = json::parse(read_file(catalog));
    st.config.inactivity_timeout_seconds = doc.at("inactivity_timeout_seconds").get<std::int64_t>();
    st.config.token_bits = doc.at("token_bits").get<int>();
    st.next_file_id = doc.at("next_file_id").get<std::int64_t>();
    for (const auto& a : doc.at("admins")) st.global_admins.insert(a.get<std::string>());
    for (const auto& f : doc.at("files")) {
        FileState fstate;
        fstate.file_id = f.at("file_id").get<std::int64_t>();
        fstate.name = f.at("name").get<std::string>();
        const fs::path vj = st.versions_json_path(fstate.file_id);
        if (fs::exists(vj)) {
            for (const auto& v : json::parse(read_file(vj))) {
                Version ver;
                ver.seq = v.at("seq").get<std::int64_t>();
                ver.author = v.at("author").get<std::string>();
                const auto ts = parse_timestamp(v.at("saved_at").get<std::string>());
                if (!ts) throw RepoError(RepoErrc::BadConfig, "bad timestamp in versions.json");
                ver.saved_at = *ts;
                ver.checksum = v.at("checksum").get<std::string>();
                ver.size = v.at("size").get<std::uint64_t>();
                fstate.versions.push_back(std::move(ver));
            }
        }
        st.files.emplace(fstate.file_id, std::move(fstate));
    }
    for (const auto& p : doc.at("privileges")) {
        Privileges privs;
        privs.edit = p.at("edit").get<bool>();
        privs.view = p.at("view").get<bool>();
        privs.audit = p.at("audit").get<bool>();
        privs.download = p.at("download").get<bool>();
        privs.admin = p.at("admin").get<bool>();
        st.privileges.emplace(
            std::make_pair(p.at("user").get<std::string>(), p.at("file_id").get<std::int64_t>()),
            privs);
    }
    for (const auto& l : doc.at("leases")) {
        LeaseState ls;
        ls.lease.file_id = l.at("file_id").get<std::int64_t>();
        ls.lease.user = l.at("user").get<std::string>();
        ls.lease.session_token = l.at("session_token").get<std::string>();
        ls.lease.otp = l.at("otp").get<std::string>();
        ls.lease.acquired_at = Timestamp{l.at("acquired_at").get<std::int64_t>()};
        ls.lease.last_activity = Timestamp{l.at("last_activity").get<std::int64_t>()};
        for (const auto& t : l.at("superseded")) {
            const std::string token = t.get<std::string>();
            ls.superseded_tokens.insert(token);
            st.stale_tokens[token] = ls.lease.file_id;
            st.issued_tokens.insert(token);
        }
        st.current_tokens[ls.lease.session_token] = ls.lease.file_id;
        st.issued_tokens.insert(ls.lease.session_token);
        st.issued_tokens.insert(ls.lease.otp);
        st.leases.emplace(ls.lease.file_id, std::move(ls));
    }
    return repo;
}

const RepoConfig& Repository::config() const { return state_->config; }

void Repository::add_global_admin(const std::string& user) {
    std::lock_guard lock(state_->mu);
    state_->global_admins.insert(user);
    state_->persist_catalog();
}

bool Repository::is_global_admin(const std::string& user) const {
    std::lock_guard lock(state_->mu);
    return state_->global_admins.count(user) > 0;
}

std::pair<std::int64_t, Version> Repository::add_file(const std::string& admin,
                                                      const std::string& name,
                                                      const std::string& bytes, Timestamp now) {
    std::lock_guard lock(state_->mu);
    auto& st = *state_;
    if (!st.global_admins.count(admin))
        throw RepoError(RepoErrc::NotAdmin, "only an administrator may insert files");
    for (const auto& [fid, f] : st.files)
        if (f.name == name)
            throw RepoError(RepoErrc::DuplicateName, "file name already in use: " + name);
    FileState f;
    f.file_id = st.next_file_id++;
    f.name = name;
    const Version v = st.store_version(f, admin, bytes, now);
    const std::int64_t id = f.file_id;
    st.files.emplace(id, std::move(f));
    st.persist_catalog();
    return {id, v};
}

void Repository::set_privileges(const std::string& admin, const std::string& user,
                                std::int64_t file_id, const Privileges& privileges) {
    std::lock_guard lock(state_->mu);
    auto& st = *state_;
    st.file_or_throw(file_id);
    if (!st.is_admin_for(admin, file_id))
        throw RepoError(RepoErrc::NotAdmin, "only an administrator may grant privileges");
    st.privileges[{user, file_id}] = privileges;
    st.persist_catalog();
}

Version Repository::admin_update(const std::string& admin, std::int64_t file_id,
                                 const std::string& bytes, Timestamp now) {
    std::lock_guard lock(state_->mu);
    auto& st = *state_;
    auto& f = st.file_or_throw(file_id);
    if (!st.is_admin_for(admin, file_id))
        throw RepoError(RepoErrc::NotAdmin, "only an administrator may update directly");
    if (const auto it = st.leases.find(file_id); it != st.leases.end())
        throw RepoError(RepoErrc::Locked,
                        "file is checked out by " + it->second.lease.user,
                        it->second.lease.user, it->second.lease.acquired_at);
    const Version v = st.store_version(f, admin, bytes, now);
    st.persist_catalog();
    return v;
}

std::pair<Lease, std::string> Repository::checkout(const std::string& user,
                                                   std::int64_t file_id, Timestamp now) {
    std::lock_guard lock(state_->mu);
    auto& st = *state_;
    auto& f = st.file_or_throw(file_id);
    if (!st.effective(user, file_id).edit)
        throw RepoError(RepoErrc::NoPrivilege, "edit privilege required");
    if (const auto it = st.leases.find(file_id); it != st.leases.end())
        throw RepoError(RepoErrc::Locked,
                        "file is checked out by " + it->second.lease.user + " since " +
                            render_timestamp(it->second.lease.acquired_at),
                        it->second.lease.user, it->second.lease.acquired_at);
    LeaseState ls;
    ls.lease.file_id = file_id;
    ls.lease.user = user;
    ls.lease.session_token = st.fresh_token();
    ls.lease.otp = st.fresh_token();
    ls.lease.acquired_at = now;
    ls.lease.last_activity = now;
    st.current_tokens[ls.lease.session_token] = file_id;
    const Lease out = ls.lease;
    st.leases.emplace(file_id, std::move(ls));
    st.persist_catalog();
    return {out, read_file(st.version_path(file_id, f.versions.back().seq))};
}

CheckinResult Repository::checkin(const std::string& token,
                                  const std::optional<std::string>& bytes, Timestamp now) {
    std::lock_guard lock(state_->mu);
    auto& st = *state_;
    const auto cur = st.current_tokens.find(token);
    if (cur == st.current_tokens.end()) {
        const auto stale = st.stale_tokens.find(token);
        if (stale != st.stale_tokens.end()) {
            const std::int64_t fid = stale->second;
            const Lease dropped = st.drop_lease(fid);
            st.append_security_log(now, "stale-token", dropped.user, fid);
            st.persist_catalog();
            throw RepoError(RepoErrc::StaleToken,
                            "superseded session token presented; session invalidated");
        }
        throw RepoError(RepoErrc::NoActiveLease, "token does not match any active lease");
    }
    const std::int64_t file_id = cur->second;
    auto& f = st.file_or_throw(file_id);
    const Lease lease = st.leases.at(file_id).lease;

    CheckinResult result;
    if (bytes) {
        const std::string& latest_checksum = f.versions.back().checksum;
        if (sha256_hex(*bytes) != latest_checksum) {
            result.version = st.store_version(f, lease.user, *bytes, now);
        }
    }
    st.drop_lease(file_id);
    st.persist_catalog();
    return result;
}

std::string Repository::renew(const std::string& token, Timestamp now) {
    std::lock_guard lock(state_->mu);
    auto& st = *state_;
    const auto cur = st.current_tokens.find(token);
    if (cur == st.current_tokens.end()) {
        const auto stale = st.stale_tokens.find(token);
        if (stale != st.stale_tokens.end()) {
            const std::int64_t fid = stale->second;
            const Lease dropped = st.drop_lease(fid);
            st.append_security_log(now, "stale-token", dropped.user, fid);
            st.persist_catalog();
            throw RepoError(RepoErrc::StaleToken,
                            "superseded session token presented; session invalidated");
        }
        throw RepoError(RepoErrc::NoActiveLease, "token does not match any active lease");
    }
    const std::int64_t file_id = cur->second;
    auto& ls = st.leases.at(file_id);
    if (now.seconds - ls.lease.last_activity.seconds > st.config.inactivity_timeout_seconds)
        throw RepoError(RepoErrc::LeaseExpired, "lease is past the inactivity timeout");
    st.current_tokens.erase(cur);
    ls.superseded_tokens.insert(ls.lease.session_token);
    st.stale_tokens[ls.lease.session_token] = file_id;
    ls.lease.session_token = st.fresh_token();
    ls.lease.last_activity = now;
    st.current_tokens[ls.lease.session_token] = file_id;
    st.persist_catalog();
    return ls.lease.session_token;
}

std::vector<Lease> Repository::expire_sweep(Timestamp now) {
    std::lock_guard lock(state_->mu);
    auto& st = *state_;
    std::vector<std::int64_t> expired;
    for (const auto& [fid, ls] : st.leases)
        if (now.seconds - ls.lease.last_activity.seconds > st.config.inactivity_timeout_seconds)
            expired.push_back(fid);
    std::vector<Lease> out;
    for (const std::int64_t fid : expired) {
        out.push_back(st.drop_lease(fid));
        st.append_security_log(now, "lease-expired", out.back().user, fid);
    }
    if (!expired.empty()) st.persist_catalog();
    return out;
}

std::vector<Version> Repository::history(const std::string& user, std::int64_t file_id) const {
    std::lock_guard lock(state_->mu);
    const auto& st = *state_;
    const auto& f = st.file_or_throw(file_id);
    const Privileges p = st.effective(user, file_id);
    if (!p.view && !p.audit && !p.download)
        throw RepoError(RepoErrc::NoPrivilege, "view, audit or download privilege required");
    return f.versions;
}

std::string Repository::get_version(const std::string& user, std::int64_t file_id,
                                    std::int64_t seq) const {
    {
        std::lock_guard lock(state_->mu);
        state_->file_or_throw(file_id);
        const Privileges p = state_->effective(user, file_id);
        if (!p.view && !p.download)
            throw RepoError(RepoErrc::NoPrivilege, "view or download privilege required");
    }
    return read_version_bytes(file_id, seq);
}

std::string Repository::read_version_bytes(std::int64_t file_id, std::int64_t seq) const {
    fs::path path;
    std::string expected_checksum;
    {
        std::lock_guard lock(state_->mu);
        const auto& f = state_->file_or_throw(file_id);
        if (seq < 1 || seq > static_cast<std::int64_t>(f.versions.size()))
            throw RepoError(RepoErrc::UnknownVersion,
                            "no version " + std::to_string(seq) + " of file " +
                                std::to_string(file_id));
        path = state_->version_path(file_id, seq);
        expected_checksum = f.versions[static_cast<std::size_t>(seq) - 1].checksum;
    }
    std::string bytes = read_file(path);
    if (sha256_hex(bytes) != expected_checksum)
        throw RepoError(RepoErrc::CorruptVersion,
                        "stored bytes do not match the recorded checksum for v" +
                            std::to_string(seq));
    return bytes;
}

std::vector<FileEntry> Repository::list_files() const {
    std::lock_guard lock(state_->mu);
    std::vector<FileEntry> out;
    for (const auto& [fid, f] : state_->files) out.push_back({fid, f.name});
    return out;
}

std::vector<std::pair<FileEntry, Privileges>> Repository::files_for(
    const std::string& user) const {
    std::lock_guard lock(state_->mu);
    std::vector<std::pair<FileEntry, Privileges>> out;
    for (const auto& [fid, f] : state_->files) {
        const Privileges p = state_->effective(user, fid);
        if (p.edit || p.view || p.audit || p.download || p.admin)
            out.push_back({FileEntry{fid, f.name}, p});
    }
    return out;
}

std::optional<std::int64_t> Repository::find_file(const std::string& name) const {
    std::lock_guard lock(state_->mu);
    for (const auto& [fid, f] : state_->files)
        if (f.name == name) return fid;
    return std::nullopt;
}

std::optional<Lease> Repository::active_lease(std::int64_t file_id) const {
    std::lock_guard lock(state_->mu);
    const auto it = state_->leases.find(file_id);
    if (it == state_->leases.end()) return std::nullopt;
    return it->second.lease;
}

Privileges Repository::effective_privileges(const std::string& user,
                                            std::int64_t file_id) const {
    std::lock_guard lock(state_->mu);
    return state_->effective(user, file_id);
}

void Repository::log_security_event(Timestamp now, const std::string& event,
                                    const std::string& user,
                                    std::optional<std::int64_t> file_id) {
    std::lock_guard lock(state_->mu);
    state_->append_security_log(now, event, user, file_id);
}

}  // namespace repo
}  // namespace celltrail
