#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "celltrail/repository.hpp"

namespace celltrail {
namespace service {

/// Login credentials: PBKDF2-HMAC-SHA256 with a per-user random salt.
/// Plaintext passwords are never stored.
class CredentialStore {
public:
    void set_password(const std::string& user, const std::string& password);
    bool verify(const std::string& user, const std::string& password) const;
    bool has_user(const std::string& user) const;

    static CredentialStore load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    struct Entry {
        std::string salt_hex;
        std::string hash_hex;
    };
    std::map<std::string, Entry> entries_;
};

/// HTTP/1.1 wire service over one repository. Plain HTTP by design: deploy
/// behind a TLS terminator. Session tokens roll on every successful
/// authenticated response (X-Session-Token in, X-Next-Token out); presenting
/// a superseded token destroys the whole session.
class Service {
public:
    Service(repo::Repository& repository, CredentialStore credentials,
            std::function<Timestamp()> clock = now_utc);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port;
    /// the chosen one is returned (0 on failure).
    int start(const std::string& host, int port);
    void stop();
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace service
}  // namespace celltrail
