#include "upm/workload_sim.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "upm/content_gen.hpp"

namespace upm {

namespace {

std::uint64_t ns_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                                t0)
        .count();
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw InvalidConfig("bad boolean for " + key + ": " + v);
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        std::uint64_t out = std::stoull(v, &pos, 0);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw InvalidConfig("bad integer for " + key + ": " + v);
    }
}

}  // namespace

void ScenarioConfig::validate() const {
    if (container_count < 1) throw InvalidConfig("container_count must be >= 1");
    if (!is_power_of_two(page_size)) throw InvalidConfig("page_size must be a power of two");
    if (shared_region_bytes % page_size != 0)
        throw InvalidConfig("shared_region_bytes must be a multiple of page_size");
    if (private_region_bytes % page_size != 0)
        throw InvalidConfig("private_region_bytes must be a multiple of page_size");
    if (volatile_bytes_per_invocation % page_size != 0)
        throw InvalidConfig("volatile_bytes_per_invocation must be a multiple of page_size");
    if (volatile_in_shared && volatile_bytes_per_invocation > shared_region_bytes)
        throw InvalidConfig("volatile bytes exceed the shared region");
    if (!volatile_in_shared && volatile_bytes_per_invocation > private_region_bytes)
        throw InvalidConfig("volatile bytes exceed the private region");
    if (advise_on_cold && shared_region_bytes * container_count > budget_bytes)
        throw BudgetExceeded("advised bytes (" +
                             std::to_string(shared_region_bytes * container_count) +
                             ") exceed the engine budget");
}

ScenarioConfig parse_scenario_config(std::istream& in) {
    ScenarioConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));

        if (key == "container_count")
            cfg.container_count = parse_u64(value, key);
        else if (key == "shared_region_bytes")
            cfg.shared_region_bytes = parse_u64(value, key);
        else if (key == "private_region_bytes")
            cfg.private_region_bytes = parse_u64(value, key);
        else if (key == "volatile_bytes_per_invocation")
            cfg.volatile_bytes_per_invocation = parse_u64(value, key);
        else if (key == "warm_invocations_per_container")
            cfg.warm_invocations_per_container = parse_u64(value, key);
        else if (key == "advise_on_cold")
            cfg.advise_on_cold = parse_bool(value, key);
        else if (key == "content_seed")
            cfg.content_seed = parse_u64(value, key);
        else if (key == "launch_mode") {
            if (value == "sequential")
                cfg.launch_mode = LaunchMode::Sequential;
            else if (value == "concurrent")
                cfg.launch_mode = LaunchMode::Concurrent;
            else
                throw InvalidConfig("launch_mode must be sequential or concurrent");
        } else if (key == "page_size")
            cfg.page_size = parse_u64(value, key);
        else if (key == "budget_bytes")
            cfg.budget_bytes = parse_u64(value, key);
        else if (key == "volatile_in_shared")
            cfg.volatile_in_shared = parse_bool(value, key);
        else
            throw InvalidConfig("unknown config key: " + key);
    }
    return cfg;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot open config file: " + path.string());
    return parse_scenario_config(in);
}

RegionLayout scenario_layout(const ScenarioConfig& config) {
    RegionLayout l;
    l.private_base = 0x1000'0000ULL;
    // One guard page between the regions keeps them non-adjacent.
    l.shared_base = l.private_base + config.private_region_bytes + config.page_size;
    return l;
}

namespace {

struct Container {
    ProcessId pid = 0;
    std::uint64_t index = 0;  // 0-based
};

class ScenarioRun {
public:
    explicit ScenarioRun(const ScenarioConfig& cfg)
        : cfg_(cfg),
          mem_(cfg.page_size),
          engine_(mem_, EngineConfig{cfg.page_size, cfg.budget_bytes}),
          layout_(scenario_layout(cfg)) {}

    ScenarioReport run() {
        ScenarioReport rep;
        rep.config = cfg_;
        rep.system_before = system_memory(mem_, engine_);
        rep.container_series.resize(cfg_.container_count);
        rep.cold_timings.resize(cfg_.container_count);
        if (cfg_.advise_on_cold) rep.cold_advise_reports.resize(cfg_.container_count);
        containers_.resize(cfg_.container_count);

        if (cfg_.launch_mode == LaunchMode::Sequential) {
            for (std::uint64_t c = 0; c < cfg_.container_count; ++c) cold_invocation(c, rep);
            for (std::uint64_t inv = 1; inv <= cfg_.warm_invocations_per_container; ++inv)
                for (std::uint64_t c = 0; c < cfg_.container_count; ++c)
                    warm_invocation(c, inv, rep);
        } else {
            run_threads([&](std::uint64_t c) { cold_invocation(c, rep); });
            for (std::uint64_t inv = 1; inv <= cfg_.warm_invocations_per_container; ++inv)
                run_threads([&](std::uint64_t c) { warm_invocation(c, inv, rep); });
        }

        rep.system_after = system_memory(mem_, engine_);
        for (const auto& r : rep.cold_advise_reports) rep.advise_total += r;
        rep.advise_calls = engine_.advise_history().size();
        check_partition_invariant(rep);
        return rep;
    }

private:
    void run_threads(const std::function<void(std::uint64_t)>& body) {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(cfg_.container_count);
        threads.reserve(cfg_.container_count);
        for (std::uint64_t c = 0; c < cfg_.container_count; ++c) {
            threads.emplace_back([&, c] {
                try {
                    body(c);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    void cold_invocation(std::uint64_t c, ScenarioReport& rep) {
        auto t0 = std::chrono::steady_clock::now();
        ProcessId pid = mem_.create_process();
        containers_[c] = Container{pid, c};
        if (cfg_.private_region_bytes > 0) {
            auto seed = derive_stream_seed(cfg_.content_seed, ContentRole::Private, c);
            mem_.map_anonymous(pid, layout_.private_base, cfg_.private_region_bytes,
                               stream_source(seed));
        }
        if (cfg_.shared_region_bytes > 0) {
            auto seed = derive_stream_seed(cfg_.content_seed, ContentRole::Shared);
            mem_.map_anonymous(pid, layout_.shared_base, cfg_.shared_region_bytes,
                               stream_source(seed));
        }
        rep.cold_timings[c].function_ns = ns_since(t0);

        if (cfg_.advise_on_cold && cfg_.shared_region_bytes > 0) {
            auto t1 = std::chrono::steady_clock::now();
            rep.cold_advise_reports[c] =
                engine_.advise(pid, layout_.shared_base, cfg_.shared_region_bytes);
            rep.cold_timings[c].advise_ns = ns_since(t1);
        }
        rep.container_series[c].push_back(pss(mem_, pid));
    }

    void warm_invocation(std::uint64_t c, std::uint64_t invocation, ScenarioReport& rep) {
        ProcessId pid = containers_[c].pid;
        std::uint64_t v = cfg_.volatile_bytes_per_invocation;
        if (v > 0) {
            VirtAddr base = cfg_.volatile_in_shared ? layout_.shared_base : layout_.private_base;
            auto seed = derive_stream_seed(cfg_.content_seed, ContentRole::Volatile, c, invocation);
            std::vector<std::uint8_t> page(cfg_.page_size);
            for (std::uint64_t p = 0; p < v / cfg_.page_size; ++p) {
                fill_stream_page(seed, p, std::span<std::uint8_t>(page));
                mem_.write(pid, base + p * cfg_.page_size, page);
            }
        }
        rep.container_series[c].push_back(pss(mem_, pid));
    }

    void check_partition_invariant(const ScenarioReport& rep) const {
        auto snap = mem_.snapshot();
        Rational sum;
        for (const auto& p : snap.processes) sum += pss(snap, p.pid).pss_exact;
        std::uint64_t live = snap.frames.size() * snap.page_size;
        if (!(sum == Rational::from(live)))
            throw InvariantViolation("PSS partition violated: sum of PSS != live frame bytes (" +
                                     std::to_string(sum.to_double()) + " != " +
                                     std::to_string(live) + ")");
        (void)rep;
    }

    const ScenarioConfig& cfg_;
    MemorySystem mem_;
    DedupEngine engine_;
    RegionLayout layout_;
    std::vector<Container> containers_;
};

}  // namespace

ScenarioReport run_scenario(const ScenarioConfig& config) {
    config.validate();
    ScenarioRun run(config);
    return run.run();
}

std::vector<TimingPoint> madvise_timing_curve(const ScenarioConfig& config) {
    config.validate();
    if (!config.advise_on_cold)
        throw InvalidConfig("madvise_timing_curve requires advise_on_cold = true");
    if (config.launch_mode != LaunchMode::Sequential)
        throw InvalidConfig("madvise_timing_curve requires sequential launch mode");

    ScenarioReport rep = run_scenario(config);
    std::vector<TimingPoint> out;
    out.reserve(rep.cold_advise_reports.size());
    for (std::uint64_t c = 0; c < rep.cold_advise_reports.size(); ++c) {
        const AdviseReport& r = rep.cold_advise_reports[c];
        out.push_back(TimingPoint{c + 1, rep.cold_timings[c].advise_ns, r.pages_inserted,
                                  r.pages_merged});
    }
    return out;
}

}  // namespace upm
