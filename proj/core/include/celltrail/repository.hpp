#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "celltrail/timestamp.hpp"

namespace celltrail {
namespace repo {

/// One immutable saved state of a file. Bytes for a seq never change after
/// creation; the checksum is the SHA-256 of the stored bytes.
struct Version {
    std::int64_t seq = 0;
    std::string author;
    Timestamp saved_at;
    std::string checksum;  // lowercase hex
    std::uint64_t size = 0;
};

/// Exclusive edit grant. The session token rolls on renew; the one-time
/// password is handed to the wire service as the checkin secret.
struct Lease {
    std::int64_t file_id = 0;
    std::string user;
    std::string session_token;
    std::string otp;
    Timestamp acquired_at;
    Timestamp last_activity;
};

/// Per-(user, file) grant flags. Admin dominates everything; edit implies
/// view. Use Repository::effective_privileges for the closed form.
struct Privileges {
    bool edit = false;
    bool view = false;
    bool audit = false;
    bool download = false;
    bool admin = false;

    friend bool operator==(const Privileges&, const Privileges&) = default;
};

struct RepoConfig {
    std::filesystem::path root;
    std::int64_t inactivity_timeout_seconds = 1800;
    int token_bits = 128;
};

struct FileEntry {
    std::int64_t file_id = 0;
    std::string name;
};

enum class RepoErrc {
    NotAdmin,
    DuplicateName,
    PathNotEmpty,
    Locked,
    NoPrivilege,
    UnknownFile,
    UnknownVersion,
    StaleToken,
    NoActiveLease,
    LeaseExpired,
    CorruptVersion,
    BadConfig,
};

class RepoError : public std::runtime_error {
public:
    RepoError(RepoErrc code, std::string message, std::string holder = {},
              Timestamp since = {})
        : std::runtime_error(std::move(message)),
          code_(code),
          holder_(std::move(holder)),
          since_(since) {}

    RepoErrc code() const { return code_; }
    const std::string& holder() const { return holder_; }  // lease holder, for Locked
    Timestamp since() const { return since_; }

private:
    RepoErrc code_;
    std::string holder_;
    Timestamp since_;
};

struct CheckinResult {
    std::optional<Version> version;  // empty: discarded or content unchanged
};

/// Versioned file store with exclusive check-out leases. All mutations are
/// serialized behind one mutex and persisted to disk (catalog.json plus one
/// immutable snapshot file per version); stored bytes may be read
/// concurrently.
class Repository {
public:
    /// Creates the on-disk layout under config.root (must be empty or
    /// absent).
    static Repository init(const RepoConfig& config);
    /// Opens an existing repository, restoring files, privileges and leases.
    static Repository open(const std::filesystem::path& root);

    Repository(Repository&&) noexcept;
    Repository& operator=(Repository&&) noexcept;
    ~Repository();

    const RepoConfig& config() const;

    // --- administration ----------------------------------------------------
    /// Deployment bootstrap: global admins pass every privilege check and
    /// may insert files. Not reachable over the wire service.
    void add_global_admin(const std::string& user);
    bool is_global_admin(const std::string& user) const;

    std::pair<std::int64_t, Version> add_file(const std::string& admin, const std::string& name,
                                              const std::string& bytes, Timestamp now);
    void set_privileges(const std::string& admin, const std::string& user, std::int64_t file_id,
                        const Privileges& privileges);
    /// Direct update of the head version; requires admin and an unleased
    /// file. History stays intact.
    Version admin_update(const std::string& admin, std::int64_t file_id,
                         const std::string& bytes, Timestamp now);

    // --- lease lifecycle ---------------------------------------------------
    std::pair<Lease, std::string> checkout(const std::string& user, std::int64_t file_id,
                                           Timestamp now);
    /// Save (bytes) or discard (nullopt). Releases the lease. Byte-identical
    /// content creates no new version.
    CheckinResult checkin(const std::string& token, const std::optional<std::string>& bytes,
                          Timestamp now);
    /// Rotates the lease session token. The old token is dead forever;
    /// presenting it later is treated as a replay attack.
    std::string renew(const std::string& token, Timestamp now);
    /// Releases every lease idle strictly longer than the configured
    /// timeout; their in-flight edits are gone.
    std::vector<Lease> expire_sweep(Timestamp now);

    // --- reads ---------------------------------------------------------------
    std::vector<Version> history(const std::string& user, std::int64_t file_id) const;
    std::string get_version(const std::string& user, std::int64_t file_id,
                            std::int64_t seq) const;
    /// Unchecked snapshot read for trusted composition (the wire service
    /// gates its audit endpoint on the audit flag, which does not grant
    /// byte access through get_version).
    std::string read_version_bytes(std::int64_t file_id, std::int64_t seq) const;

    std::vector<FileEntry> list_files() const;
    /// Files on which the user holds any effective privilege.
    std::vector<std::pair<FileEntry, Privileges>> files_for(const std::string& user) const;
    std::optional<std::int64_t> find_file(const std::string& name) const;
    std::optional<Lease> active_lease(std::int64_t file_id) const;
    Privileges effective_privileges(const std::string& user, std::int64_t file_id) const;

    /// Appends one line to security.log.
    void log_security_event(Timestamp now, const std::string& event, const std::string& user,
                            std::optional<std::int64_t> file_id = std::nullopt);

private:
    Repository();
    struct State;
    std::unique_ptr<State> state_;
};

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

/// Cryptographically random token of at least `bits` entropy, hex-encoded.
std::string random_token(int bits);

}  // namespace repo
}  // namespace celltrail
