#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "htce/matrix.hpp"
#include "htce/nn.hpp"
#include "htce/rng.hpp"

namespace htce::sim {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DomainTag { source, target };

inline const char* to_string(DomainTag d) { return d == DomainTag::source ? "source" : "target"; }

/// How the columns of the full covariate matrix are divided between the two
/// domains. Each domain's own feature vector is laid out as
/// [shared block | private block].
struct FeaturePartition {
    std::vector<std::size_t> shared_cols;
    std::vector<std::size_t> private_source_cols;
    std::vector<std::size_t> private_target_cols;

    std::size_t d_shared() const { return shared_cols.size(); }
    std::size_t d_private_source() const { return private_source_cols.size(); }
    std::size_t d_private_target() const { return private_target_cols.size(); }
    std::size_t d_source() const { return d_shared() + d_private_source(); }
    std::size_t d_target() const { return d_shared() + d_private_target(); }

    std::size_t required_cols() const {
        std::size_t m = 0;
        for (auto c : shared_cols) m = std::max(m, c + 1);
        for (auto c : private_source_cols) m = std::max(m, c + 1);
        for (auto c : private_target_cols) m = std::max(m, c + 1);
        return m;
    }

    void validate() const {
        if (shared_cols.empty() || private_source_cols.empty() || private_target_cols.empty())
            throw SimError("partition: every block needs at least one column");
        std::vector<std::size_t> all;
        all.insert(all.end(), shared_cols.begin(), shared_cols.end());
        all.insert(all.end(), private_source_cols.begin(), private_source_cols.end());
        all.insert(all.end(), private_target_cols.begin(), private_target_cols.end());
        std::sort(all.begin(), all.end());
        if (std::adjacent_find(all.begin(), all.end()) != all.end())
            throw SimError("partition: column index lists overlap");
    }
};

enum class CoefficientLaw { normal, uniform };

inline const char* to_string(CoefficientLaw law) {
    return law == CoefficientLaw::normal ? "normal" : "uniform";
}

/// All knobs of the semi-synthetic generator.
struct SimConfig {
    double alpha = 0.5;
    double beta = 0.5;
    double kappa_source = 1.0;
    double kappa_target = 1.0;
    std::size_t n_source = 3000;
    std::size_t n_target = 300;
    FeaturePartition partition;
    double noise_std = 0.1;
    double coefficient_param_a = -10.0;  // mean for normal, lower bound for uniform
    double coefficient_param_b = 10.0;   // std-dev for normal, upper bound for uniform
    CoefficientLaw coefficient_law = CoefficientLaw::normal;
    std::uint64_t seed = 0;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0 || beta < 0.0 || beta > 1.0)
            throw SimError("sim config: alpha/beta must lie in [0,1]");
        if (kappa_source < 0.0 || kappa_target < 0.0) throw SimError("sim config: kappa must be >= 0");
        if (noise_std < 0.0) throw SimError("sim config: noise_std must be >= 0");
        if (n_target < 20) throw SimError("sim config: n_target must be >= 20 to survive a 56/24/20 split");
        partition.validate();
    }
};

/// Outcome coefficients, drawn once per simulation seed. Index [w][j] for the
/// treatment-specific families; the per-domain all-feature coefficients are
/// treatment independent.
struct CoefficientSet {
    std::vector<double> v_shared[2];
    std::vector<double> v_private_source[2];
    std::vector<double> v_private_target[2];
    std::vector<double> v_all_source;
    std::vector<double> v_all_target;
};

/// One domain's data plus the simulator's ground truth.
struct Dataset {
    Matrix x;                  // n x d_domain, columns ordered [shared | private]
    std::vector<int> w;        // assigned treatment
    std::vector<double> y;     // factual outcome
    std::vector<double> mu0;   // noiseless potential-outcome means
    std::vector<double> mu1;
    std::vector<double> tau;   // mu1 - mu0
    std::vector<double> pi;    // true propensity
    DomainTag domain = DomainTag::target;
    std::size_t d_shared = 0;  // width of the leading shared block in x

    std::size_t n() const { return x.rows(); }

    Dataset rows(const std::vector<std::size_t>& idx) const {
        Dataset out;
        out.x = take_rows(x, idx);
        out.domain = domain;
        out.d_shared = d_shared;
        out.w.reserve(idx.size());
        for (auto i : idx) {
            out.w.push_back(w[i]);
            out.y.push_back(y[i]);
            out.mu0.push_back(mu0[i]);
            out.mu1.push_back(mu1[i]);
            out.tau.push_back(tau[i]);
            out.pi.push_back(pi[i]);
        }
        return out;
    }
};

struct SplitDataset {
    Dataset train;
    Dataset validation;
    Dataset test;
};

/// Draws the sizes of the shared and private blocks, each uniform on
/// [5, floor(d_full/3)], then assigns disjoint column sets without
/// replacement from the full feature set.
inline FeaturePartition sample_partition(std::size_t d_full, Rng& rng) {
    if (d_full < 15) throw SimError("sample_partition: need d_full >= 15");
    const std::int64_t hi = static_cast<std::int64_t>(d_full / 3);
    const auto ds = static_cast<std::size_t>(rng.uniform_int(5, hi));
    const auto dpr = static_cast<std::size_t>(rng.uniform_int(5, hi));
    const auto dpt = static_cast<std::size_t>(rng.uniform_int(5, hi));
    const auto cols = rng.sample_without_replacement(d_full, ds + dpr + dpt);
    FeaturePartition p;
    p.shared_cols.assign(cols.begin(), cols.begin() + ds);
    p.private_source_cols.assign(cols.begin() + ds, cols.begin() + ds + dpr);
    p.private_target_cols.assign(cols.begin() + ds + dpr, cols.end());
    return p;
}

/// N_T ~ U(100, 500), N_R ~ U(1000, n_full - N_T).
inline std::pair<std::size_t, std::size_t> sample_domain_sizes(std::size_t n_full, Rng& rng) {
    if (n_full < 1500) throw SimError("sample_domain_sizes: need n_full >= 1500");
    const auto n_target = static_cast<std::size_t>(rng.uniform_int(100, 500));
    const auto n_source = static_cast<std::size_t>(
        rng.uniform_int(1000, static_cast<std::int64_t>(n_full - n_target)));
    return {n_target, n_source};
}

/// Min-max scales each column into [0,1] in place; a constant column maps to
/// 0.5 everywhere.
inline void minmax_scale_columns(Matrix& x) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double lo = x(0, j), hi = x(0, j);
        for (std::size_t i = 1; i < x.rows(); ++i) {
            lo = std::min(lo, x(i, j));
            hi = std::max(hi, x(i, j));
        }
        if (hi == lo) {
            for (std::size_t i = 0; i < x.rows(); ++i) x(i, j) = 0.5;
        } else {
            const double scale = 1.0 / (hi - lo);
            for (std::size_t i = 0; i < x.rows(); ++i) x(i, j) = (x(i, j) - lo) * scale;
        }
    }
}

/// Synthetic covariates: i.i.d. standard normals, min-max scaled per column.
inline Matrix generate_covariates(std::size_t n, std::size_t d, Rng& rng) {
    if (n < 1 || d < 1) throw SimError("generate_covariates: n and d must be >= 1");
    Matrix x(n, d);
    for (double& v : x.raw()) v = rng.normal();
    minmax_scale_columns(x);
    return x;
}

inline CoefficientSet draw_coefficients(const FeaturePartition& p, const SimConfig& cfg, Rng& rng) {
    auto draw = [&](std::size_t count) {
        std::vector<double> v(count);
        for (auto& c : v)
            c = cfg.coefficient_law == CoefficientLaw::normal
                    ? rng.normal(cfg.coefficient_param_a, cfg.coefficient_param_b)
                    : rng.uniform(cfg.coefficient_param_a, cfg.coefficient_param_b);
        return v;
    };
    CoefficientSet c;
    for (int w = 0; w < 2; ++w) {
        c.v_shared[w] = draw(p.d_shared());
        c.v_private_source[w] = draw(p.d_private_source());
        c.v_private_target[w] = draw(p.d_private_target());
    }
    c.v_all_source = draw(p.d_source());
    c.v_all_target = draw(p.d_target());
    return c;
}

struct PotentialOutcomes {
    std::vector<double> mu0, mu1;  // noiseless means
    std::vector<double> y0, y1;    // with one shared noise draw per sample
};

/// Potential-outcome means for one domain. x_domain columns must be ordered
/// [shared | private]; the last term averages the domain's full feature
/// vector with treatment-independent coefficients, so it cancels in the CATE.
inline PotentialOutcomes simulate_outcomes(const Matrix& x_domain, const FeaturePartition& p,
                                           const CoefficientSet& coeffs, const SimConfig& cfg,
                                           DomainTag domain, Rng& rng) {
    const std::size_t ds = p.d_shared();
    const std::size_t dp = domain == DomainTag::source ? p.d_private_source() : p.d_private_target();
    if (x_domain.cols() != ds + dp)
        throw ShapeError("simulate_outcomes: x has " + std::to_string(x_domain.cols()) +
                         " columns, partition expects " + std::to_string(ds + dp));
    const auto& v_priv = domain == DomainTag::source ? coeffs.v_private_source : coeffs.v_private_target;
    const auto& v_all = domain == DomainTag::source ? coeffs.v_all_source : coeffs.v_all_target;

    const std::size_t n = x_domain.rows();
    PotentialOutcomes out;
    out.mu0.resize(n);
    out.mu1.resize(n);
    out.y0.resize(n);
    out.y1.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mu[2];
        for (int w = 0; w < 2; ++w) {
            double shared_term = 0.0;
            for (std::size_t j = 0; j < ds; ++j) shared_term += coeffs.v_shared[w][j] * x_domain(i, j);
            shared_term /= static_cast<double>(ds);
            double priv_term = 0.0;
            for (std::size_t j = 0; j < dp; ++j) priv_term += v_priv[w][j] * x_domain(i, ds + j);
            priv_term /= static_cast<double>(dp);
            double all_term = 0.0;
            for (std::size_t j = 0; j < ds + dp; ++j) all_term += v_all[j] * x_domain(i, j);
            all_term /= static_cast<double>(ds + dp);
            mu[w] = cfg.alpha * shared_term +
                    (1.0 - cfg.alpha) * (cfg.beta * priv_term + (1.0 - cfg.beta) * all_term);
        }
        const double eps = cfg.noise_std > 0.0 ? rng.normal(0.0, cfg.noise_std) : 0.0;
        out.mu0[i] = mu[0];
        out.mu1[i] = mu[1];
        out.y0[i] = mu[0] + eps;
        out.y1[i] = mu[1] + eps;
    }
    return out;
}

/// pi_i = sigmoid(kappa * (mu1_i - mu0_i)) from the noiseless means;
/// w_i ~ Bernoulli(pi_i).
inline std::pair<std::vector<int>, std::vector<double>> assign_treatments(
    const std::vector<double>& mu0, const std::vector<double>& mu1, double kappa, Rng& rng) {
    if (mu0.size() != mu1.size()) throw ShapeError("assign_treatments: length mismatch");
    if (kappa < 0.0) throw SimError("assign_treatments: kappa must be >= 0");
    std::vector<int> w(mu0.size());
    std::vector<double> pi(mu0.size());
    for (std::size_t i = 0; i < mu0.size(); ++i) {
        pi[i] = nn::sigmoid(kappa * (mu1[i] - mu0[i]));
        w[i] = rng.bernoulli(pi[i]) ? 1 : 0;
    }
    return {std::move(w), std::move(pi)};
}

/// Random 56/24/20 split; rounding remainders go to the training slice.
inline SplitDataset split_dataset(const Dataset& ds, Rng& rng) {
    const std::size_t n = ds.n();
    if (n < 20) throw SimError("split_dataset: need n >= 20");
    const auto n_val = static_cast<std::size_t>(std::floor(0.24 * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(0.20 * static_cast<double>(n)));
    const std::size_t n_train = n - n_val - n_test;
    const auto perm = rng.permutation(n);
    const std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + n_train);
    const std::vector<std::size_t> val_idx(perm.begin() + n_train, perm.begin() + n_train + n_val);
    const std::vector<std::size_t> test_idx(perm.begin() + n_train + n_val, perm.end());
    return {ds.rows(train_idx), ds.rows(val_idx), ds.rows(test_idx)};
}

struct DomainPair {
    Dataset source;
    Dataset target;
    CoefficientSet coefficients;
};

/// Full generation pipeline for one (source, target) pair. When x_full is
/// given its rows are subsampled disjointly for the two domains (after
/// min-max scaling); otherwise synthetic covariates are generated for
/// exactly n_source + n_target rows over partition.required_cols() columns.
inline DomainPair simulate_pair(const SimConfig& cfg, std::optional<Matrix> x_full = std::nullopt) {
    cfg.validate();
    Rng cov_rng(derive_seed(cfg.seed, "covariates"));
    Matrix full;
    if (x_full) {
        full = std::move(*x_full);
        if (full.cols() < cfg.partition.required_cols())
            throw SimError("simulate_pair: covariate matrix narrower than the partition needs");
        if (full.rows() < cfg.n_source + cfg.n_target)
            throw SimError("simulate_pair: covariate matrix has fewer rows than n_source + n_target");
        minmax_scale_columns(full);
    } else {
        full = generate_covariates(cfg.n_source + cfg.n_target, cfg.partition.required_cols(), cov_rng);
    }

    Rng row_rng(derive_seed(cfg.seed, "rows"));
    const auto perm = row_rng.sample_without_replacement(full.rows(), cfg.n_source + cfg.n_target);
    const std::vector<std::size_t> src_rows(perm.begin(), perm.begin() + cfg.n_source);
    const std::vector<std::size_t> tgt_rows(perm.begin() + cfg.n_source, perm.end());

    Rng coeff_rng(derive_seed(cfg.seed, "coefficients"));
    CoefficientSet coeffs = draw_coefficients(cfg.partition, cfg, coeff_rng);

    auto build = [&](const std::vector<std::size_t>& rows, DomainTag tag) {
        const auto& priv = tag == DomainTag::source ? cfg.partition.private_source_cols
                                                    : cfg.partition.private_target_cols;
        Dataset ds;
        ds.domain = tag;
        ds.d_shared = cfg.partition.d_shared();
        ds.x = Matrix(rows.size(), cfg.partition.d_shared() + priv.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::size_t j = 0;
            for (auto c : cfg.partition.shared_cols) ds.x(i, j++) = full(rows[i], c);
            for (auto c : priv) ds.x(i, j++) = full(rows[i], c);
        }
        Rng out_rng(derive_seed(cfg.seed, "outcomes", std::string(to_string(tag))));
        auto po = simulate_outcomes(ds.x, cfg.partition, coeffs, cfg, tag, out_rng);
        ds.mu0 = std::move(po.mu0);
        ds.mu1 = std::move(po.mu1);
        ds.tau.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) ds.tau[i] = ds.mu1[i] - ds.mu0[i];
        Rng w_rng(derive_seed(cfg.seed, "treatments", std::string(to_string(tag))));
        const double kappa = tag == DomainTag::source ? cfg.kappa_source : cfg.kappa_target;
        auto [w, pi] = assign_treatments(ds.mu0, ds.mu1, kappa, w_rng);
        ds.w = std::move(w);
        ds.pi = std::move(pi);
        ds.y.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) ds.y[i] = ds.w[i] ? po.y1[i] : po.y0[i];
        return ds;
    };

    DomainPair pair;
    pair.source = build(src_rows, DomainTag::source);
    pair.target = build(tgt_rows, DomainTag::target);
    pair.coefficients = std::move(coeffs);
    return pair;
}

}  // namespace htce::sim
