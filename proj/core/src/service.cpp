#include "celltrail/service.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "celltrail/audit.hpp"
#include "celltrail/base64.hpp"
#include "celltrail/container_io.hpp"

namespace celltrail {
namespace service {

using nlohmann::json;

namespace {

constexpr int kPbkdf2Iterations = 10000;
constexpr int kHashBytes = 32;

std::string pbkdf2_hex(const std::string& password, const std::string& salt_hex) {
    unsigned char out[kHashBytes];
    PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()),
                      reinterpret_cast<const unsigned char*>(salt_hex.data()),
                      static_cast<int>(salt_hex.size()), kPbkdf2Iterations, EVP_sha256(),
                      kHashBytes, out);
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(kHashBytes * 2);
    for (unsigned char b : out) {
        s.push_back(hex[b >> 4]);
        s.push_back(hex[b & 0xF]);
    }
    return s;
}

}  // namespace

void CredentialStore::set_password(const std::string& user, const std::string& password) {
    Entry e;
    e.salt_hex = repo::random_token(128);
    e.hash_hex = pbkdf2_hex(password, e.salt_hex);
    entries_[user] = std::move(e);
}

bool CredentialStore::verify(const std::string& user, const std::string& password) const {
    const auto it = entries_.find(user);
    // Hash against a fixed salt even for unknown users so timing does not
    // reveal user existence.
    const std::string salt = it == entries_.end() ? std::string(32, '0') : it->second.salt_hex;
    const std::string computed = pbkdf2_hex(password, salt);
    if (it == entries_.end()) return false;
    const std::string& stored = it->second.hash_hex;
    if (computed.size() != stored.size()) return false;
    return CRYPTO_memcmp(computed.data(), stored.data(), stored.size()) == 0;
}

bool CredentialStore::has_user(const std::string& user) const { return entries_.count(user) > 0; }

CredentialStore CredentialStore::load(const std::filesystem::path& path) {
    CredentialStore store;
    std::ifstream in(path);
    if (!in) return store;
    const json doc = json::parse(in);
    for (const auto& [user, entry] : doc.items())
        store.entries_[user] = Entry{entry.at("salt").get<std::string>(),
                                     entry.at("hash").get<std::string>()};
    return store;
}

void CredentialStore::save(const std::filesystem::path& path) const {
    json doc = json::object();
    for (const auto& [user, e] : entries_)
        doc[user] = {{"salt", e.salt_hex}, {"hash", e.hash_hex}};
    std::ofstream out(path, std::ios::trunc);
    out << doc.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

struct Service::Impl {
    repo::Repository& repository;
    CredentialStore credentials;
    std::function<Timestamp()> clock;

    httplib::Server server;
    std::thread server_thread;
    std::atomic<bool> started{false};

    struct Session {
        std::int64_t id = 0;
        std::string user;
        std::string current_token;
        std::vector<std::string> old_tokens;
        Timestamp created_at;
        Timestamp last_seen;
    };

    std::mutex mu;
    std::int64_t next_session_id = 1;
    std::map<std::int64_t, Session> sessions;
    std::map<std::string, std::int64_t> current_tokens;  // token -> session id
    std::map<std::string, std::int64_t> stale_tokens;
    std::set<std::string> issued_tokens;

    struct OtpGrant {
        std::int64_t file_id = 0;
        std::string lease_token;
        std::string user;
    };
    std::map<std::string, OtpGrant> otp_grants;

    Impl(repo::Repository& r, CredentialStore c, std::function<Timestamp()> clk)
        : repository(r), credentials(std::move(c)), clock(std::move(clk)) {}

    std::string fresh_token() {
        for (;;) {
            std::string t = repo::random_token(repository.config().token_bits);
            if (issued_tokens.insert(t).second) return t;
        }
    }

    static void reply(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    static void reply_error(httplib::Response& res, int status, const std::string& message) {
        reply(res, status, json{{"error", message}});
    }

    static int status_of(const repo::RepoError& e) {
        switch (e.code()) {
            case repo::RepoErrc::StaleToken: return 401;
            case repo::RepoErrc::NoPrivilege:
            case repo::RepoErrc::NotAdmin: return 403;
            case repo::RepoErrc::UnknownFile:
            case repo::RepoErrc::UnknownVersion: return 404;
            case repo::RepoErrc::Locked: return 423;
            case repo::RepoErrc::NoActiveLease:
            case repo::RepoErrc::DuplicateName:
            case repo::RepoErrc::LeaseExpired: return 409;
            default: return 500;
        }
    }

    /// Destroys a session entirely: every token it ever used goes dark.
    void destroy_session(std::int64_t session_id) {
        const auto it = sessions.find(session_id);
        if (it == sessions.end()) return;
        current_tokens.erase(it->second.current_token);
        for (const auto& t : it->second.old_tokens) stale_tokens.erase(t);
        sessions.erase(it);
    }

    /// Authenticates the request. On success returns the session id;
    /// otherwise writes the 401 response. A superseded token is a replay
    /// attack: the whole session dies.
    std::optional<std::int64_t> authenticate(const httplib::Request& req,
                                             httplib::Response& res) {
        const std::string token = req.get_header_value("X-Session-Token");
        if (token.empty()) {
            reply_error(res, 401, "missing X-Session-Token");
            return std::nullopt;
        }
        std::lock_guard lock(mu);
        if (const auto cur = current_tokens.find(token); cur != current_tokens.end())
            return cur->second;
        if (const auto stale = stale_tokens.find(token); stale != stale_tokens.end()) {
            const auto sess = sessions.find(stale->second);
            const std::string user = sess == sessions.end() ? "?" : sess->second.user;
            destroy_session(stale->second);
            repository.log_security_event(clock(), "replayed-session-token", user);
            reply_error(res, 401, "stale session token; session terminated");
            return std::nullopt;
        }
        reply_error(res, 401, "no such session");
        return std::nullopt;
    }

    /// Rotates the session token after a successful exchange and announces
    /// the replacement in X-Next-Token.
    void rotate(std::int64_t session_id, const std::string& presented,
                httplib::Response& res) {
        std::lock_guard lock(mu);
        const auto it = sessions.find(session_id);
        if (it == sessions.end()) return;
        Session& s = it->second;
        current_tokens.erase(presented);
        stale_tokens[presented] = session_id;
        s.old_tokens.push_back(presented);
        s.current_token = fresh_token();
        s.last_seen = clock();
        current_tokens[s.current_token] = session_id;
        res.set_header("X-Next-Token", s.current_token);
    }

    std::string session_user(std::int64_t session_id) {
        std::lock_guard lock(mu);
        return sessions.at(session_id).user;
    }

    /// Wraps a handler with authentication and token rotation.
    template <typename Fn>
    auto authed(Fn fn) {
        return [this, fn](const httplib::Request& req, httplib::Response& res) {
            const auto session_id = authenticate(req, res);
            if (!session_id) return;
            const std::string presented = req.get_header_value("X-Session-Token");
            const std::string user = session_user(*session_id);
            try {
                fn(req, res, user);
            } catch (const repo::RepoError& e) {
                reply_error(res, status_of(e), e.what());
            } catch (const std::exception& e) {
                reply_error(res, 500, e.what());
            }
            if (res.status >= 200 && res.status < 300) rotate(*session_id, presented, res);
        };
    }

    static std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            reply_error(res, 400, "request body must be a JSON object");
            return std::nullopt;
        }
        return body;
    }

    void register_routes() {
        server.Post("/login", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req, res);
            if (!body) return;
            if (!body->contains("user") || !body->contains("password")) {
                reply_error(res, 400, "login requires user and password");
                return;
            }
            const std::string user = body->at("user").get<std::string>();
            const std::string password = body->at("password").get<std::string>();
            if (!credentials.verify(user, password)) {
                // One uniform answer: no hint which part failed.
                repository.log_security_event(clock(), "failed-login", user);
                reply_error(res, 401, "bad credentials");
                return;
            }
            std::lock_guard lock(mu);
            Session s;
            s.id = next_session_id++;
            s.user = user;
            s.current_token = fresh_token();
            s.created_at = s.last_seen = clock();
            current_tokens[s.current_token] = s.id;
            const std::string token = s.current_token;
            sessions.emplace(s.id, std::move(s));
            reply(res, 200, json{{"token", token}});
        });

        server.Post("/session/renew",
                    authed([](const httplib::Request&, httplib::Response& res, const std::string&) {
                        reply(res, 200, json::object());
                    }));

        server.Get("/files", authed([this](const httplib::Request&, httplib::Response& res,
                                           const std::string& user) {
                       json out = json::array();
                       for (const auto& [entry, privs] : repository.files_for(user)) {
                           json flags = json::array();
                           if (privs.edit) flags.push_back("edit");
                           if (privs.view) flags.push_back("view");
                           if (privs.audit) flags.push_back("audit");
                           if (privs.download) flags.push_back("download");
                           if (privs.admin) flags.push_back("admin");
                           out.push_back({{"file_id", entry.file_id},
                                          {"name", entry.name},
                                          {"privileges", flags}});
                       }
                       reply(res, 200, out);
                   }));

        server.Post(R"(/files/(\d+)/checkout)",
                    authed([this](const httplib::Request& req, httplib::Response& res,
                                  const std::string& user) {
                        const std::int64_t file_id = std::stoll(req.matches[1].str());
                        auto [lease, bytes] = repository.checkout(user, file_id, clock());
                        {
                            std::lock_guard lock(mu);
                            otp_grants[lease.otp] =
                                OtpGrant{file_id, lease.session_token, user};
                        }
                        const auto versions = repository.history(user, file_id);
                        reply(res, 200,
                              json{{"otp", lease.otp},
                                   {"content_b64", base64_encode(bytes)},
                                   {"version", versions.back().seq}});
                    }));

        server.Post(R"(/files/(\d+)/checkin)",
                    authed([this](const httplib::Request& req, httplib::Response& res,
                                  const std::string& user) {
                        const std::int64_t file_id = std::stoll(req.matches[1].str());
                        const auto body = parse_body(req, res);
                        if (!body) return;
                        if (!body->contains("otp")) {
                            reply_error(res, 400, "checkin requires the checkout otp");
                            return;
                        }
                        const std::string otp = body->at("otp").get<std::string>();
                        OtpGrant grant;
                        {
                            std::lock_guard lock(mu);
                            const auto it = otp_grants.find(otp);
                            if (it == otp_grants.end() || it->second.file_id != file_id) {
                                reply_error(res, 409, "no active checkout for this otp");
                                return;
                            }
                            grant = it->second;
                        }
                        if (grant.user != user) {
                            reply_error(res, 403, "checkout belongs to another user");
                            return;
                        }
                        std::optional<std::string> bytes;
                        const bool discard =
                            body->contains("discard") && body->at("discard").get<bool>();
                        if (!discard) {
                            if (!body->contains("content_b64")) {
                                reply_error(res, 400,
                                            "checkin requires content_b64 or discard:true");
                                return;
                            }
                            bytes = base64_decode(body->at("content_b64").get<std::string>());
                            if (!bytes) {
                                reply_error(res, 400, "content_b64 is not valid base64");
                                return;
                            }
                        }
                        repo::CheckinResult result;
                        try {
                            result = repository.checkin(grant.lease_token, bytes, clock());
                        } catch (const repo::RepoError&) {
                            std::lock_guard lock(mu);
                            otp_grants.erase(otp);  // grant is dead either way
                            throw;
                        }
                        {
                            std::lock_guard lock(mu);
                            otp_grants.erase(otp);  // consumed exactly once
                        }
                        if (result.version)
                            reply(res, 200, json{{"version", result.version->seq}});
                        else
                            reply(res, 200, json{{"unchanged", true}});
                    }));

        server.Get(R"(/files/(\d+)/history)",
                   authed([this](const httplib::Request& req, httplib::Response& res,
                                 const std::string& user) {
                       const std::int64_t file_id = std::stoll(req.matches[1].str());
                       json out = json::array();
                       for (const auto& v : repository.history(user, file_id))
                           out.push_back({{"seq", v.seq},
                                          {"author", v.author},
                                          {"saved_at", render_timestamp(v.saved_at)},
                                          {"checksum", v.checksum}});
                       reply(res, 200, out);
                   }));

        server.Get(R"(/files/(\d+)/versions/(\d+)/audit)",
                   authed([this](const httplib::Request& req, httplib::Response& res,
                                 const std::string& user) {
                       handle_audit(req, res, user);
                   }));

        server.Get(R"(/files/(\d+)/versions/(\d+))",
                   authed([this](const httplib::Request& req, httplib::Response& res,
                                 const std::string& user) {
                       const std::int64_t file_id = std::stoll(req.matches[1].str());
                       const std::int64_t seq = std::stoll(req.matches[2].str());
                       const std::string bytes = repository.get_version(user, file_id, seq);
                       reply(res, 200, json{{"content_b64", base64_encode(bytes)}});
                   }));

        server.Post("/admin/files",
                    authed([this](const httplib::Request& req, httplib::Response& res,
                                  const std::string& user) {
                        const auto body = parse_body(req, res);
                        if (!body) return;
                        if (!body->contains("name") || !body->contains("content_b64")) {
                            reply_error(res, 400, "requires name and content_b64");
                            return;
                        }
                        const auto bytes =
                            base64_decode(body->at("content_b64").get<std::string>());
                        if (!bytes) {
                            reply_error(res, 400, "content_b64 is not valid base64");
                            return;
                        }
                        const auto [file_id, version] = repository.add_file(
                            user, body->at("name").get<std::string>(), *bytes, clock());
                        (void)version;
                        reply(res, 200, json{{"file_id", file_id}});
                    }));
    }

    void handle_audit(const httplib::Request& req, httplib::Response& res,
                      const std::string& user) {
        const std::int64_t file_id = std::stoll(req.matches[1].str());
        const std::int64_t seq = std::stoll(req.matches[2].str());
        const repo::Privileges privs = repository.effective_privileges(user, file_id);
        if (!privs.audit)
            throw repo::RepoError(repo::RepoErrc::NoPrivilege, "audit privilege required");
        const std::string bytes = repository.read_version_bytes(file_id, seq);

        audit::FilterSpec spec;
        for (auto [it, end] = req.params.equal_range("class"); it != end; ++it) {
            const auto cls = audit::parse_change_class(it->second);
            if (!cls) {
                reply_error(res, 400, "unknown change class: " + it->second);
                return;
            }
            if (!spec.classes) spec.classes.emplace();
            spec.classes->insert(*cls);
        }
        for (auto [it, end] = req.params.equal_range("author"); it != end; ++it) {
            if (!spec.authors) spec.authors.emplace();
            spec.authors->insert(it->second);
        }
        if (req.has_param("since")) {
            const auto t = parse_timestamp(req.get_param_value("since"));
            if (!t) {
                reply_error(res, 400, "bad since timestamp");
                return;
            }
            spec.since = *t;
        }
        if (req.has_param("until")) {
            const auto t = parse_timestamp(req.get_param_value("until"));
            if (!t) {
                reply_error(res, 400, "bad until timestamp");
                return;
            }
            spec.until = *t;
        }

        LoadResult loaded;
        try {
            loaded = load_document(bytes);
        } catch (const ContainerError& e) {
            reply_error(res, 409, std::string("stored version is not a valid container: ") +
                                      e.what());
            return;
        }
        const auto records = audit::filter_changes(loaded.document.changes(), spec);
        res.status = 200;
        res.set_content(audit::render_report(records, audit::ReportFormat::Csv), "text/csv");
    }
};

Service::Service(repo::Repository& repository, CredentialStore credentials,
                 std::function<Timestamp()> clock)
    : impl_(std::make_unique<Impl>(repository, std::move(credentials), std::move(clock))) {
    impl_->register_routes();
}

Service::~Service() { stop(); }

int Service::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) return 0;
    } else {
        if (!impl_->server.bind_to_port(host, port)) return 0;
    }
    impl_->started = true;
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void Service::stop() {
    if (impl_ && impl_->started.exchange(false)) {
        impl_->server.stop();
        if (impl_->server_thread.joinable()) impl_->server_thread.join();
    }
}

bool Service::running() const { return impl_ && impl_->server.is_running(); }

}  // namespace service
}  // namespace celltrail
