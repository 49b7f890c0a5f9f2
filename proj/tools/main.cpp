#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "celltrail/audit.hpp"
#include "celltrail/bench.hpp"
#include "celltrail/container_io.hpp"
#include "celltrail/eval.hpp"
#include "celltrail/repository.hpp"
#include "celltrail/service.hpp"

namespace fs = std::filesystem;
using namespace celltrail;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomainError = 1;
constexpr int kExitUsage = 2;

[[noreturn]] void die(const std::string& message) {
    std::cerr << "error: " << message << "\n";
    std::exit(kExitDomainError);
}

std::string read_file_or_die(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) die("cannot read " + p.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file_or_die(const fs::path& p, std::string_view bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) die("cannot write " + p.string());
}

Document load_or_die(const fs::path& p) {
    LoadResult result = load_document(read_file_or_die(p));
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    return std::move(result.document);
}

Timestamp when_or_now(const std::string& flag) {
    if (flag.empty()) return now_utc();
    const auto t = parse_timestamp(flag);
    if (!t) die("bad timestamp (expected YYYY-MM-DDTHH:MM:SSZ): " + flag);
    return *t;
}

std::string default_author() {
    if (const char* user = std::getenv("USER"); user && *user) return user;
    return "unknown";
}

// --- audit -------------------------------------------------------------------

struct AuditArgs {
    std::string file;
    std::vector<std::string> classes;
    std::vector<std::string> authors;
    std::string since, until, range;
    std::string format = "text";
    bool strict = false;
};

int run_audit(const AuditArgs& args) {
    const Document doc = load_or_die(args.file);

    audit::FilterSpec spec;
    for (const auto& name : args.classes) {
        const auto cls = audit::parse_change_class(name);
        if (!cls) die("unknown change class: " + name);
        if (!spec.classes) spec.classes.emplace();
        spec.classes->insert(*cls);
    }
    if (!args.authors.empty())
        spec.authors = std::set<std::string>(args.authors.begin(), args.authors.end());
    if (!args.since.empty()) spec.since = when_or_now(args.since);
    if (!args.until.empty()) spec.until = when_or_now(args.until);
    if (!args.range.empty()) {
        const auto r = parse_range(args.range);
        if (!r) die("bad cell range: " + args.range);
        spec.region = *r;
    }

    const auto records = audit::filter_changes(doc.changes(), spec);
    const auto format =
        args.format == "csv" ? audit::ReportFormat::Csv : audit::ReportFormat::Text;
    if (args.strict) {
        const auto deltas = audit::strict_discrepancies(doc);
        std::cout << audit::render_report(records, format, deltas);
    } else {
        std::cout << audit::render_report(records, format);
    }
    return kExitOk;
}

// --- reconstruct ----------------------------------------------------------------

int run_reconstruct_cmd(const std::string& file, std::int64_t at, const std::string& output) {
    const Document doc = load_or_die(file);
    const Document past = audit::reconstruct_at(doc, at);
    write_file_or_die(output, save_document(past));
    std::cerr << "wrote state after change " << at << " to " << output << "\n";
    return kExitOk;
}

// --- bench --------------------------------------------------------------------

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            die("bad integer list: " + csv);
        }
    }
    if (out.empty()) die("empty list: " + csv);
    return out;
}

int run_bench_run(const std::string& sizes_csv, int trials, int concurrency) {
    if (trials < 1) die("--trials must be >= 1");
    const std::vector<int> sizes = parse_int_list(sizes_csv);
    // First seed warms up; one timed recalculation per trial.
    std::vector<double> seeds;
    for (int i = 0; i <= trials; ++i) seeds.push_back(2.0 + i);
    const auto samples = bench::run_timing(sizes, seeds, concurrency);
    std::cout << bench::write_timing_csv(samples);
    return kExitOk;
}

int run_bench_fit(const std::string& input, const std::string& model) {
    const auto points = bench::read_xy_csv(read_file_or_die(input));
    if (model == "power") {
        const auto fit = bench::fit_power_law(points);
        std::cout << "a=" << render_number(fit.scale_a) << " b=" << render_number(fit.exponent_b)
                  << "\n";
    } else {
        const auto fit = bench::fit_linear(points);
        std::cout << "intercept=" << render_number(fit.intercept)
                  << " slope=" << render_number(fit.slope) << "\n";
    }
    return kExitOk;
}

int run_bench_overhead(double baseline, const std::string& input) {
    const auto samples = bench::read_concurrency_csv(read_file_or_die(input));
    const auto rows = bench::overhead_report(baseline, samples);
    std::cout << bench::write_overhead_csv(rows);
    return kExitOk;
}

// --- repo -----------------------------------------------------------------------

repo::Repository open_repo(const std::string& root) {
    if (root.empty()) die("--root is required");
    return repo::Repository::open(root);
}

std::int64_t file_id_or_die(const repo::Repository& r, const std::string& name) {
    if (const auto id = r.find_file(name)) return *id;
    die("no file named '" + name + "' in the repository");
}

struct ServeConfig {
    std::string root;
    std::string host = "127.0.0.1";
    int port = 8080;
};

ServeConfig read_serve_config(const std::string& path) {
    ServeConfig cfg;
    std::ifstream in(path);
    if (!in) die("cannot read config file " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            die(path + ":" + std::to_string(line_no) + ": expected key=value");
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "root")
            cfg.root = value;
        else if (key == "host")
            cfg.host = value;
        else if (key == "port")
            cfg.port = std::stoi(value);
        else
            die(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    return cfg;
}

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

int run_serve(const ServeConfig& cfg) {
    repo::Repository repository = open_repo(cfg.root);
    auto credentials = service::CredentialStore::load(fs::path(cfg.root) / "credentials.json");
    service::Service svc(repository, std::move(credentials));
    const int port = svc.start(cfg.host, cfg.port);
    if (port == 0) die("cannot bind " + cfg.host + ":" + std::to_string(cfg.port));
    std::cerr << "serving " << cfg.root << " on http://" << cfg.host << ":" << port
              << " (Ctrl-C to stop)\n";
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_stop && svc.running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    svc.stop();
    std::cerr << "stopped\n";
    return kExitOk;
}

repo::Privileges parse_privs(const std::string& csv) {
    repo::Privileges p;
    if (csv.empty() || csv == "none") return p;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        if (item == "edit") p.edit = true;
        else if (item == "view") p.view = true;
        else if (item == "audit") p.audit = true;
        else if (item == "download") p.download = true;
        else if (item == "admin") p.admin = true;
        else die("unknown privilege: " + item + " (edit|view|audit|download|admin)");
    }
    return p;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"celltrail: spreadsheet audit-trail container, repository and benchmarks"};
    app.require_subcommand(1);

    // audit
    AuditArgs audit_args;
    auto* cmd_audit = app.add_subcommand("audit", "Report the change log of a container file");
    cmd_audit->add_option("file", audit_args.file, "container (.ttz) path")->required();
    cmd_audit->add_option("--class", audit_args.classes,
                          "change class filter (formula-to-value, entered, ...)");
    cmd_audit->add_option("--author", audit_args.authors, "author filter");
    cmd_audit->add_option("--since", audit_args.since, "ISO-8601 lower bound");
    cmd_audit->add_option("--until", audit_args.until, "ISO-8601 upper bound");
    cmd_audit->add_option("--range", audit_args.range, "cell region filter, e.g. A1:D10");
    cmd_audit->add_option("--format", audit_args.format, "text|csv")
        ->check(CLI::IsMember({"text", "csv"}));
    cmd_audit->add_flag("--strict-discrepancy", audit_args.strict,
                        "re-evaluate replaced formulas in the reconstructed prior state");

    // reconstruct
    std::string rec_file, rec_out;
    std::int64_t rec_at = 0;
    auto* cmd_rec =
        app.add_subcommand("reconstruct", "Write the document state after a given change id");
    cmd_rec->add_option("file", rec_file, "container (.ttz) path")->required();
    cmd_rec->add_option("--at", rec_at, "change id (0 = base state)")->required();
    cmd_rec->add_option("-o,--output", rec_out, "output path")->required();

    // bench
    auto* cmd_bench = app.add_subcommand("bench", "Benchmark spreadsheets, timing and fits");
    cmd_bench->require_subcommand(1);

    int gen_size = 10;
    double gen_b2 = 2.0;
    int gen_cap = 60;
    std::string gen_out;
    auto* cmd_gen_a = cmd_bench->add_subcommand("gen-a", "Generate the matrix-inverse benchmark");
    cmd_gen_a->add_option("--size", gen_size, "main section is size x size")->required();
    cmd_gen_a->add_option("--b2", gen_b2, "seed value for cell B2");
    cmd_gen_a->add_option("--cap", gen_cap, "maximum allowed size");
    cmd_gen_a->add_option("-o,--output", gen_out, "output path")->required();

    int gen_rows = 10, gen_cols = 10;
    std::string gen_b_out;
    auto* cmd_gen_b = cmd_bench->add_subcommand("gen-b", "Generate the exp-sin-cos benchmark");
    cmd_gen_b->add_option("--rows", gen_rows, "main section rows")->required();
    cmd_gen_b->add_option("--cols", gen_cols, "main section columns")->required();
    cmd_gen_b->add_option("-o,--output", gen_b_out, "output path")->required();

    std::string run_sizes = "10,15,20,25";
    int run_trials = 3, run_concurrency = 1;
    auto* cmd_run = cmd_bench->add_subcommand("run", "Time recalculations; CSV on stdout");
    cmd_run->add_option("--sizes", run_sizes, "comma-separated sizes");
    cmd_run->add_option("--trials", run_trials, "timed recalculations per size");
    cmd_run->add_option("--concurrency", run_concurrency, "simultaneous document copies");

    std::string fit_input, fit_model;
    auto* cmd_fit = cmd_bench->add_subcommand("fit", "Fit a model to x,y CSV data");
    cmd_fit->add_option("--input", fit_input, "CSV file (N,seconds or x,y)")->required();
    cmd_fit->add_option("--model", fit_model, "power|linear")
        ->required()
        ->check(CLI::IsMember({"power", "linear"}));

    double overhead_baseline = 0.0;
    std::string overhead_input;
    auto* cmd_overhead =
        cmd_bench->add_subcommand("overhead", "Per-task overhead versus a baseline");
    cmd_overhead->add_option("--baseline", overhead_baseline, "baseline seconds")->required();
    cmd_overhead->add_option("--input", overhead_input, "CSV file (concurrency,seconds)")
        ->required();

    // repo
    auto* cmd_repo = app.add_subcommand("repo", "Versioned repository with exclusive checkout");
    cmd_repo->require_subcommand(1);
    std::string root, user = default_author(), when;

    auto add_common = [&](CLI::App* c, bool with_user = true) {
        c->add_option("--root", root, "repository root directory")->required();
        if (with_user) c->add_option("--user", user, "acting user");
        c->add_option("--when", when, "ISO-8601 clock override (for reproducible runs)");
    };

    std::vector<std::string> init_admins;
    std::int64_t init_timeout = 1800;
    int init_token_bits = 128;
    auto* cmd_init = cmd_repo->add_subcommand("init", "Create an empty repository");
    add_common(cmd_init, false);
    cmd_init->add_option("--admin", init_admins, "global administrator user(s)");
    cmd_init->add_option("--inactivity-timeout", init_timeout, "lease timeout, seconds");
    cmd_init->add_option("--token-bits", init_token_bits, "session token entropy");

    std::string add_name, add_from;
    auto* cmd_add = cmd_repo->add_subcommand("add", "Insert a file (admin only)");
    add_common(cmd_add);
    cmd_add->add_option("name", add_name, "repository file name")->required();
    cmd_add->add_option("-f,--file", add_from, "local file to upload")->required();

    std::string co_name, co_out;
    auto* cmd_co = cmd_repo->add_subcommand("checkout", "Acquire the exclusive edit lease");
    add_common(cmd_co);
    cmd_co->add_option("name", co_name, "repository file name")->required();
    cmd_co->add_option("-o,--output", co_out, "write the working copy here (default: name)");

    std::string ci_token, ci_from;
    bool ci_discard = false;
    auto* cmd_ci = cmd_repo->add_subcommand("checkin", "Return the lease, saving or discarding");
    add_common(cmd_ci, false);
    cmd_ci->add_option("--token", ci_token, "lease session token")->required();
    cmd_ci->add_option("-f,--file", ci_from, "edited local file");
    cmd_ci->add_flag("--discard", ci_discard, "release without saving");

    std::string hist_name;
    auto* cmd_hist = cmd_repo->add_subcommand("history", "List all versions of a file");
    add_common(cmd_hist);
    cmd_hist->add_option("name", hist_name, "repository file name")->required();

    std::string get_name, get_out;
    std::int64_t get_seq = 0;
    auto* cmd_get = cmd_repo->add_subcommand("get", "Fetch one immutable version");
    add_common(cmd_get);
    cmd_get->add_option("name", get_name, "repository file name")->required();
    cmd_get->add_option("--version", get_seq, "version sequence number")->required();
    cmd_get->add_option("-o,--output", get_out, "output path (default: name.vN)");

    std::string grant_as, grant_user, grant_file, grant_privs;
    auto* cmd_grant = cmd_repo->add_subcommand("grant", "Set a user's privileges on a file");
    cmd_grant->add_option("--root", root, "repository root directory")->required();
    cmd_grant->add_option("--as", grant_as, "acting administrator")->required();
    cmd_grant->add_option("--user", grant_user, "user receiving the grant")->required();
    cmd_grant->add_option("--file", grant_file, "repository file name")->required();
    cmd_grant
        ->add_option("--privs", grant_privs,
                     "comma-separated: edit,view,audit,download,admin (or 'none')")
        ->required();

    std::string ua_user, ua_password;
    auto* cmd_ua = cmd_repo->add_subcommand("user-add", "Store login credentials for serving");
    cmd_ua->add_option("--root", root, "repository root directory")->required();
    cmd_ua->add_option("user", ua_user, "username")->required();
    cmd_ua->add_option("--password", ua_password, "password")->required();

    ServeConfig serve_cfg;
    std::string serve_config_file;
    auto* cmd_serve = cmd_repo->add_subcommand("serve", "Run the HTTP wire service");
    cmd_serve->add_option("--root", serve_cfg.root, "repository root directory");
    cmd_serve->add_option("--port", serve_cfg.port, "TCP port");
    cmd_serve->add_option("--host", serve_cfg.host, "bind address");
    cmd_serve->add_option("--config", serve_config_file, "key=value file (root, host, port)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (cmd_audit->parsed()) return run_audit(audit_args);
        if (cmd_rec->parsed()) return run_reconstruct_cmd(rec_file, rec_at, rec_out);
    } catch (const std::exception& e) {
        die(e.what());
    }

    try {
        if (cmd_gen_a->parsed()) {
            const Document doc = bench::generate_bench_a(gen_size, gen_b2, {gen_cap});
            write_file_or_die(gen_out, save_document(doc));
            std::cerr << "wrote " << gen_out << "\n";
            return kExitOk;
        }
        if (cmd_gen_b->parsed()) {
            const Document doc = bench::generate_bench_b(gen_rows, gen_cols);
            write_file_or_die(gen_b_out, save_document(doc));
            std::cerr << "wrote " << gen_b_out << "\n";
            return kExitOk;
        }
        if (cmd_run->parsed()) return run_bench_run(run_sizes, run_trials, run_concurrency);
        if (cmd_fit->parsed()) return run_bench_fit(fit_input, fit_model);
        if (cmd_overhead->parsed()) return run_bench_overhead(overhead_baseline, overhead_input);

        if (cmd_init->parsed()) {
            repo::RepoConfig config;
            config.root = root;
            config.inactivity_timeout_seconds = init_timeout;
            config.token_bits = init_token_bits;
            repo::Repository repository = repo::Repository::init(config);
            for (const auto& admin : init_admins) repository.add_global_admin(admin);
            std::cerr << "initialized repository at " << root << "\n";
            return kExitOk;
        }
        if (cmd_add->parsed()) {
            repo::Repository repository = open_repo(root);
            const auto [id, version] =
                repository.add_file(user, add_name, read_file_or_die(add_from), when_or_now(when));
            std::cout << "file " << id << " version " << version.seq << "\n";
            return kExitOk;
        }
        if (cmd_co->parsed()) {
            repo::Repository repository = open_repo(root);
            const auto file_id = file_id_or_die(repository, co_name);
            const auto [lease, bytes] = repository.checkout(user, file_id, when_or_now(when));
            const std::string out_path = co_out.empty() ? co_name : co_out;
            write_file_or_die(out_path, bytes);
            std::cout << "token " << lease.session_token << "\n";
            std::cout << "otp " << lease.otp << "\n";
            std::cerr << "working copy written to " << out_path << "\n";
            return kExitOk;
        }
        if (cmd_ci->parsed()) {
            if (ci_discard && !ci_from.empty()) die("-f and --discard are mutually exclusive");
            if (!ci_discard && ci_from.empty())
                die("checkin needs exactly one of -f <file> or --discard");
            repo::Repository repository = open_repo(root);
            std::optional<std::string> bytes;
            if (!ci_discard) bytes = read_file_or_die(ci_from);
            const auto result = repository.checkin(ci_token, bytes, when_or_now(when));
            if (ci_discard)
                std::cout << "discarded\n";
            else if (result.version)
                std::cout << "version " << result.version->seq << "\n";
            else
                std::cout << "unchanged\n";
            return kExitOk;
        }
        if (cmd_hist->parsed()) {
            repo::Repository repository = open_repo(root);
            const auto file_id = file_id_or_die(repository, hist_name);
            for (const auto& v : repository.history(user, file_id))
                std::cout << v.seq << " " << v.author << " " << render_timestamp(v.saved_at)
                          << " " << v.checksum << "\n";
            return kExitOk;
        }
        if (cmd_get->parsed()) {
            repo::Repository repository = open_repo(root);
            const auto file_id = file_id_or_die(repository, get_name);
            const std::string bytes = repository.get_version(user, file_id, get_seq);
            const std::string out_path =
                get_out.empty() ? get_name + ".v" + std::to_string(get_seq) : get_out;
            write_file_or_die(out_path, bytes);
            std::cerr << "wrote version " << get_seq << " to " << out_path << "\n";
            return kExitOk;
        }
        if (cmd_grant->parsed()) {
            repo::Repository repository = open_repo(root);
            const auto file_id = file_id_or_die(repository, grant_file);
            repository.set_privileges(grant_as, grant_user, file_id, parse_privs(grant_privs));
            std::cerr << "granted\n";
            return kExitOk;
        }
        if (cmd_ua->parsed()) {
            if (root.empty()) die("--root is required");
            const fs::path creds_path = fs::path(root) / "credentials.json";
            auto store = service::CredentialStore::load(creds_path);
            store.set_password(ua_user, ua_password);
            store.save(creds_path);
            std::cerr << "stored credentials for " << ua_user << "\n";
            return kExitOk;
        }
        if (cmd_serve->parsed()) {
            if (!serve_config_file.empty()) {
                const ServeConfig from_file = read_serve_config(serve_config_file);
                if (serve_cfg.root.empty()) serve_cfg.root = from_file.root;
                if (cmd_serve->count("--port") == 0) serve_cfg.port = from_file.port;
                if (cmd_serve->count("--host") == 0) serve_cfg.host = from_file.host;
            }
            return run_serve(serve_cfg);
        }
    } catch (const repo::RepoError& e) {
        if (e.code() == repo::RepoErrc::Locked)
            die(std::string("locked by ") + e.holder() + " since " + render_timestamp(e.since()));
        die(e.what());
    } catch (const std::exception& e) {
        die(e.what());
    }
    return kExitUsage;
}
