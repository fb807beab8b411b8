#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "htce/learners.hpp"
#include "htce/sim.hpp"

namespace htce::bench {

using learners::LearnerKind;
using learners::Method;
using learners::TrainConfig;

struct BenchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Root mean squared error of the CATE estimate (PEHE).
inline double pehe(const std::vector<double>& tau_hat, const std::vector<double>& tau_true) {
    if (tau_hat.size() != tau_true.size()) throw ShapeError("pehe: length mismatch");
    if (tau_hat.empty()) throw ShapeError("pehe: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < tau_hat.size(); ++i) {
        const double d = tau_hat[i] - tau_true[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(tau_hat.size()));
}

enum class Sweep { benchmark, ablation, alpha_sweep, ntarget_sweep, kappa_sweep };

inline const char* to_string(Sweep s) {
    switch (s) {
        case Sweep::benchmark: return "benchmark";
        case Sweep::ablation: return "ablation";
        case Sweep::alpha_sweep: return "alpha_sweep";
        case Sweep::ntarget_sweep: return "ntarget_sweep";
        case Sweep::kappa_sweep: return "kappa_sweep";
    }
    return "?";
}

inline Sweep sweep_from_string(const std::string& s) {
    if (s == "benchmark") return Sweep::benchmark;
    if (s == "ablation") return Sweep::ablation;
    if (s == "alpha_sweep") return Sweep::alpha_sweep;
    if (s == "ntarget_sweep") return Sweep::ntarget_sweep;
    if (s == "kappa_sweep") return Sweep::kappa_sweep;
    throw BenchError("unknown sweep '" + s + "'");
}

/// One grid coordinate. benchmark/ablation sweeps use the single default
/// point; the others override one knob of the simulator template.
struct SweepValue {
    double alpha = std::numeric_limits<double>::quiet_NaN();
    long n_target = -1;
    double kappa_source = std::numeric_limits<double>::quiet_NaN();
    double kappa_target = std::numeric_limits<double>::quiet_NaN();
    std::string label = "default";

    void apply(sim::SimConfig& cfg) const {
        if (!std::isnan(alpha)) cfg.alpha = alpha;
        if (n_target >= 0) cfg.n_target = static_cast<std::size_t>(n_target);
        if (!std::isnan(kappa_source)) cfg.kappa_source = kappa_source;
        if (!std::isnan(kappa_target)) cfg.kappa_target = kappa_target;
    }

    static SweepValue def() { return {}; }
    static SweepValue of_alpha(double a) {
        SweepValue v;
        v.alpha = a;
        std::ostringstream os;
        os << a;
        v.label = os.str();
        return v;
    }
    static SweepValue of_ntarget(long n) {
        SweepValue v;
        v.n_target = n;
        v.label = std::to_string(n);
        return v;
    }
    static SweepValue of_kappa(double kr, double kt) {
        SweepValue v;
        v.kappa_source = kr;
        v.kappa_target = kt;
        std::ostringstream os;
        os << kr << ":" << kt;
        v.label = os.str();
        return v;
    }
};

struct ExperimentSpec {
    Sweep sweep = Sweep::benchmark;
    std::vector<LearnerKind> learners = {LearnerKind::s, LearnerKind::t, LearnerKind::dr,
                                         LearnerKind::tarnet};
    std::vector<Method> methods = {Method::target, Method::htce};
    sim::SimConfig sim;           // template; per-cell seed and sweep knob applied on top
    std::size_t d_full = 30;      // feature pool when the template has no fixed partition
    std::vector<SweepValue> values = {SweepValue::def()};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    TrainConfig train;

    void validate() const {
        if (learners.empty() || methods.empty() || values.empty() || seeds.empty())
            throw BenchError("experiment spec: learners, methods, values and seeds must be nonempty");
    }
};

struct EvalRecord {
    std::string sweep;
    std::string sweep_value;
    std::string learner;
    std::string method;
    std::uint64_t seed = 0;
    double pehe = std::numeric_limits<double>::quiet_NaN();
    double wallclock_s = 0.0;
    std::string error;  // empty on success; JSON-only failure detail

    bool failed() const { return !error.empty() || !std::isfinite(pehe); }
};

struct Aggregate {
    std::string sweep, sweep_value, learner, method;
    double mean_pehe = std::numeric_limits<double>::quiet_NaN();
    double std_error = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_seeds = 0;
};

struct EvalReport {
    std::vector<EvalRecord> records;

    /// Mean and standard error (sample std over seeds / sqrt(n)) per cell
    /// group, skipping failed records.
    std::vector<Aggregate> aggregates() const {
        std::vector<Aggregate> out;
        auto find = [&](const EvalRecord& r) -> Aggregate* {
            for (auto& a : out)
                if (a.sweep == r.sweep && a.sweep_value == r.sweep_value && a.learner == r.learner &&
                    a.method == r.method)
                    return &a;
            out.push_back({r.sweep, r.sweep_value, r.learner, r.method});
            return &out.back();
        };
        std::vector<std::vector<double>> values;
        std::vector<Aggregate*> slots;
        for (const auto& r : records) {
            Aggregate* a = find(r);
            std::size_t k = 0;
            for (; k < slots.size(); ++k)
                if (slots[k] == a) break;
            if (k == slots.size()) {
                slots.push_back(a);
                values.emplace_back();
            }
            if (!r.failed()) values[k].push_back(r.pehe);
        }
        for (std::size_t k = 0; k < slots.size(); ++k) {
            auto& a = *slots[k];
            const auto& v = values[k];
            a.n_seeds = v.size();
            if (v.empty()) continue;
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            a.mean_pehe = mean;
            if (v.size() > 1) {
                double ss = 0.0;
                for (double x : v) ss += (x - mean) * (x - mean);
                const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
                a.std_error = sd / std::sqrt(static_cast<double>(v.size()));
            } else {
                a.std_error = 0.0;
            }
        }
        return out;
    }

    const Aggregate* find(const std::string& value, const std::string& learner,
                          const std::string& method, const std::vector<Aggregate>& aggs) const {
        for (const auto& a : aggs)
            if (a.sweep_value == value && a.learner == learner && a.method == method) return &a;
        return nullptr;
    }
};

/// Per-cell seeds: the dataset seed depends only on (run seed, sweep, value)
/// so every method within a run sees the identical dataset, while the
/// training seed also hashes learner and method. Adding cells to a spec never
/// perturbs existing cells.
inline std::uint64_t data_seed_for(const ExperimentSpec& spec, const SweepValue& v, std::uint64_t seed) {
    return derive_seed(seed, std::string(to_string(spec.sweep)), v.label, "data");
}

inline std::uint64_t train_seed_for(const ExperimentSpec& spec, const SweepValue& v, std::uint64_t seed,
                                    LearnerKind k, Method m) {
    return derive_seed(seed, std::string(to_string(spec.sweep)), v.label,
                       std::string(learners::to_string(k)), std::string(learners::to_string(m)),
                       "train");
}

inline std::size_t cell_parallelism(std::size_t n_cells) {
    std::size_t n = std::thread::hardware_concurrency();
    if (const char* env = std::getenv("HTCE_BENCH_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = static_cast<std::size_t>(v);
    }
    if (n < 1) n = 1;
    return std::min(n, std::max<std::size_t>(n_cells, 1));
}

/// Runs the full (value x learner x method x seed) grid. Cells are
/// independent: each regenerates its dataset from the shared data seed, so
/// scheduling order and thread count cannot change any result. Failures are
/// recorded and the grid continues.
inline EvalReport run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    struct Cell {
        std::size_t vi, li, mi, si;
    };
    std::vector<Cell> cells;
    for (std::size_t vi = 0; vi < spec.values.size(); ++vi)
        for (std::size_t li = 0; li < spec.learners.size(); ++li)
            for (std::size_t mi = 0; mi < spec.methods.size(); ++mi)
                for (std::size_t si = 0; si < spec.seeds.size(); ++si) cells.push_back({vi, li, mi, si});

    EvalReport report;
    report.records.resize(cells.size());

    auto run_cell = [&](const Cell& c) {
        const SweepValue& value = spec.values[c.vi];
        const LearnerKind kind = spec.learners[c.li];
        const Method method = spec.methods[c.mi];
        const std::uint64_t seed = spec.seeds[c.si];

        EvalRecord rec;
        rec.sweep = to_string(spec.sweep);
        rec.sweep_value = value.label;
        rec.learner = learners::to_string(kind);
        rec.method = learners::to_string(method);
        rec.seed = seed;

        const auto t0 = std::chrono::steady_clock::now();
        try {
            sim::SimConfig cfg = spec.sim;
            value.apply(cfg);
            cfg.seed = data_seed_for(spec, value, seed);
            if (cfg.partition.shared_cols.empty()) {
                Rng prng(derive_seed(cfg.seed, "partition"));
                cfg.partition = sim::sample_partition(spec.d_full, prng);
            }
            sim::DomainPair pair = sim::simulate_pair(cfg);
            Rng split_src(derive_seed(cfg.seed, "split_source"));
            Rng split_tgt(derive_seed(cfg.seed, "split_target"));
            sim::SplitDataset src = sim::split_dataset(pair.source, split_src);
            sim::SplitDataset tgt = sim::split_dataset(pair.target, split_tgt);

            TrainConfig tc = spec.train;
            tc.seed = train_seed_for(spec, value, seed, kind, method);
            auto model = learners::train_model(kind, method, src, tgt, tc);
            rec.pehe = pehe(model->predict_cate(tgt.test.x), tgt.test.tau);
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        rec.wallclock_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return rec;
    };

    const std::size_t n_threads = cell_parallelism(cells.size());
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) report.records[i] = run_cell(cells[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                report.records[i] = run_cell(cells[i]);
            }
        };
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return report;
}

// ---------------------------------------------------------------------------
// report emission

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline void emit_records_csv(const EvalReport& report, const std::string& path) {
    if (report.records.empty()) throw BenchError("emit: empty report");
    std::ofstream out(path);
    if (!out) throw BenchError("emit: cannot write " + path);
    out << "sweep,sweep_value,learner,method,seed,pehe,wallclock_s\n";
    for (const auto& r : report.records)
        out << r.sweep << ',' << r.sweep_value << ',' << r.learner << ',' << r.method << ','
            << r.seed << ',' << format_double(r.pehe) << ',' << format_double(r.wallclock_s) << '\n';
}

inline void emit_aggregates_csv(const EvalReport& report, const std::string& path) {
    if (report.records.empty()) throw BenchError("emit: empty report");
    std::ofstream out(path);
    if (!out) throw BenchError("emit: cannot write " + path);
    out << "sweep,sweep_value,learner,method,mean_pehe,std_error\n";
    for (const auto& a : report.aggregates())
        out << a.sweep << ',' << a.sweep_value << ',' << a.learner << ',' << a.method << ','
            << format_double(a.mean_pehe) << ',' << format_double(a.std_error) << '\n';
}

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["records"] = nlohmann::json::array();
    for (const auto& r : report.records) {
        nlohmann::json rec{{"sweep", r.sweep},       {"sweep_value", r.sweep_value},
                           {"learner", r.learner},   {"method", r.method},
                           {"seed", r.seed},         {"pehe", r.pehe},
                           {"wallclock_s", r.wallclock_s}};
        if (!r.error.empty()) rec["error"] = r.error;
        j["records"].push_back(std::move(rec));
    }
    j["aggregates"] = nlohmann::json::array();
    for (const auto& a : report.aggregates())
        j["aggregates"].push_back({{"sweep", a.sweep},
                                   {"sweep_value", a.sweep_value},
                                   {"learner", a.learner},
                                   {"method", a.method},
                                   {"mean_pehe", a.mean_pehe},
                                   {"std_error", a.std_error},
                                   {"n_seeds", a.n_seeds}});
    return j;
}

inline void emit_report_json(const EvalReport& report, const std::string& path) {
    if (report.records.empty()) throw BenchError("emit: empty report");
    std::ofstream out(path);
    if (!out) throw BenchError("emit: cannot write " + path);
    out << report_to_json(report).dump(2) << '\n';
}

/// Round-trips the records CSV written by emit_records_csv.
inline EvalReport parse_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw BenchError("parse: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw BenchError("parse: empty file");
    EvalReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        EvalRecord r;
        std::string seed, pehe_s, wall;
        std::getline(ss, r.sweep, ',');
        std::getline(ss, r.sweep_value, ',');
        std::getline(ss, r.learner, ',');
        std::getline(ss, r.method, ',');
        std::getline(ss, seed, ',');
        std::getline(ss, pehe_s, ',');
        std::getline(ss, wall, ',');
        r.seed = std::strtoull(seed.c_str(), nullptr, 10);
        r.pehe = std::strtod(pehe_s.c_str(), nullptr);
        r.wallclock_s = std::strtod(wall.c_str(), nullptr);
        report.records.push_back(std::move(r));
    }
    return report;
}

}  // namespace htce::bench
