#include "rbf/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "rbf/continuum_sim.hpp"
#include "rbf/data_mover.hpp"
#include "rbf/remote_repository.hpp"
#include "rbf/scenario_config.hpp"
#include "rbf/stats.hpp"

namespace rbf {

int exit_code_for(ErrorCode code) noexcept {
    using namespace exit_code;
    switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidTopic:
    case ErrorCode::PayloadTooLarge:
    case ErrorCode::InvalidConfig:
    case ErrorCode::UnconfiguredModelType:
    case ErrorCode::EmptyCurve: return kUsage;
    case ErrorCode::StorageFailure:
    case ErrorCode::NotFound: return kIo;
    case ErrorCode::UnknownFile:
    case ErrorCode::UnknownTopic: return kUnknownFile;
    case ErrorCode::UnknownVersion: return kUnknownVersion;
    case ErrorCode::ChecksumMismatch: return kChecksumMismatch;
    case ErrorCode::Malformed:
    case ErrorCode::InvalidRange: return kMalformed;
    case ErrorCode::Timeout: return kTimeout;
    case ErrorCode::EmptySelection: return kEmptySelection;
    default: return kOther;
    }
}

namespace {

ScenarioConfig config_or_default(const std::string& path) {
    return path.empty() ? ScenarioConfig{} : load_config(path);
}

Bytes read_all(std::istream& in) {
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void print_version(std::ostream& out, const FileVersion& v) {
    out << "name=" << v.file_name << '\n'
        << "version=" << v.version << '\n'
        << "bytes=" << v.byte_length << '\n'
        << "start_seq=" << v.start_seq << '\n'
        << "end_seq=" << v.end_seq << '\n'
        << "sha256=" << to_hex(v.checksum) << '\n'
        << "push_time_ms=" << ms_of(v.push_time) << '\n';
}

int serve(const std::string& repo_dir, std::uint16_t port, const std::string& bind, std::ostream& out) {
    // Block the stop signals before any thread starts so only the waiter
    // below receives them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    LocalRepository backend(repo_dir);
    RepositoryServer server(backend, port, bind);
    out << "listening on tcp://" << bind << ':' << server.port() << std::endl;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        server.stop();
    });
    server.wait();
    waiter.join();
    return exit_code::kOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in) {
    CLI::App app{"Model freshness simulator and file repository client", "rbf"};
    app.require_subcommand(1);

    std::string config_path, out_path, trace_path, repo, name, file, model = "fno", tiers = "all", bind = "127.0.0.1";
    std::optional<std::uint64_t> seed;
    std::optional<std::uint32_t> version;
    std::uint16_t port = 7070;

    auto* simulate = app.add_subcommand("simulate", "Run a scenario and write its trace and summaries");
    simulate->add_option("--config", config_path, "Scenario JSON (defaults when omitted)");
    simulate->add_option("--seed", seed, "Override the scenario seed");
    simulate->add_option("--out", out_path, "Output directory")->required();

    auto* stats = app.add_subcommand("stats", "Inter-publish statistics from a trace");
    stats->add_option("--trace", trace_path, "trace.ndjson")->required();
    stats->add_option("--model", model, "pinn, fno or pcr");
    stats->add_option("--tiers", tiers, "ded, opp or all");

    auto add_repo = [&](CLI::App* cmd) {
        cmd->add_option("--repo", repo, "Repository directory or tcp://host:port")->envname("RBF_REPO")->required();
        cmd->add_option("--name", name, "File name")->required();
    };
    auto* push = app.add_subcommand("push", "Push a file (stdin when --file is absent)");
    add_repo(push);
    push->add_option("--file", file, "Input file");
    auto* pull = app.add_subcommand("pull", "Pull a file (stdout when --file is absent)");
    add_repo(pull);
    pull->add_option("--file", file, "Output file");
    pull->add_option("--version", version, "Version, latest when absent");
    auto* latest = app.add_subcommand("latest", "Print the newest version record");
    add_repo(latest);

    auto* decay = app.add_subcommand("decay-report", "Expected decay period and MAE per extra generation");
    decay->add_option("--config", config_path, "Scenario JSON (defaults when omitted)");
    decay->add_option("--out", out_path, "Output CSV")->required();

    auto* srv = app.add_subcommand("serve", "Serve a local repository over TCP until SIGINT/SIGTERM");
    srv->add_option("--repo", repo, "Repository directory")->envname("RBF_REPO")->required();
    srv->add_option("--port", port, "Port, 0 for ephemeral");
    srv->add_option("--bind", bind, "Bind address");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? exit_code::kOk : exit_code::kUsage;
    }

    try {
        if (*simulate) {
            ScenarioConfig cfg = config_or_default(config_path);
            if (seed) cfg.seed = *seed;
            const SimTrace trace = run_scenario(cfg);
            write_trace_files(trace, out_path);
            const auto events = trace.publish_events();
            out << "publishes=" << events.size() << " horizon_h=" << cfg.horizon_h << " seed=" << cfg.seed << '\n';
            for (const auto& s : publish_interval_stats(events)) out << format_stats(s) << '\n';
            for (ModelType m : kAllModelTypes) {
                if (trace.deployed(m).empty()) continue;
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.1f", time_averaged_age_min(trace, m));
                out << to_string(m) << " mean deployed age: " << buf << " min\n";
            }
        } else if (*stats) {
            std::ifstream f(trace_path);
            if (!f) throw Error(ErrorCode::StorageFailure, "cannot read " + trace_path);
            const auto events = publishes_from_ndjson(f);
            const ModelType m = parse_model_type(model);
            const TierSet t = parse_tier_set(tiers);
            const auto gaps = publish_gaps_ms(events, m, t);
            out << format_stats(interval_stats(gaps, std::string(to_string(m)) + "/" + std::string(to_string(t))))
                << '\n';
        } else if (*push) {
            Bytes content;
            if (file.empty()) {
                content = read_all(in);
            } else {
                std::ifstream f(file, std::ios::binary);
                if (!f) throw Error(ErrorCode::StorageFailure, "cannot read " + file);
                content = read_all(f);
            }
            print_version(out, open_repository(repo)->push_file(name, content));
        } else if (*pull) {
            const Bytes content = open_repository(repo)->pull_file(name, version);
            if (file.empty()) {
                out.write(reinterpret_cast<const char*>(content.data()), static_cast<std::streamsize>(content.size()));
                out.flush();
            } else {
                std::ofstream f(file, std::ios::binary | std::ios::trunc);
                f.write(reinterpret_cast<const char*>(content.data()), static_cast<std::streamsize>(content.size()));
                f.close();
                if (!f) throw Error(ErrorCode::StorageFailure, "cannot write " + file);
            }
        } else if (*latest) {
            print_version(out, open_repository(repo)->latest_version(name));
        } else if (*decay) {
            const ScenarioConfig cfg = config_or_default(config_path);
            const std::string csv = decay_report_csv(cfg);
            std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
            f << csv;
            f.close();
            if (!f) throw Error(ErrorCode::StorageFailure, "cannot write " + out_path);
            const auto b = indistinguishability_bound(cfg);
            char buf[200];
            std::snprintf(buf, sizeof buf,
                          "k=1 period=%.1f min; sensor floor %.1f min; error floor %.2f m/s; "
                          "%.2f data generations per %.1f min period (%u extra, %u reported)\n",
                          expected_decay_period(cfg.base_period_min, 1), b.min_useful_period_min, b.error_floor_mps,
                          b.period_ratio, b.base_period_min, b.max_extra_generations, b.reported_extra_generations);
            out << buf;
        } else if (*srv) {
            return serve(repo, port, bind, out);
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::kOther;
    }
    return exit_code::kOk;
}

} // namespace rbf
