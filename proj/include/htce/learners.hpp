#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "htce/blocks.hpp"
#include "htce/matrix.hpp"
#include "htce/nn.hpp"
#include "htce/rng.hpp"
#include "htce/sim.hpp"

namespace htce::learners {

using blocks::OutputKind;
using blocks::Representation;
using sim::Dataset;
using sim::DomainTag;
using sim::SplitDataset;

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LearnerKind { s, t, dr, tarnet };

inline const char* to_string(LearnerKind k) {
    switch (k) {
        case LearnerKind::s: return "s";
        case LearnerKind::t: return "t";
        case LearnerKind::dr: return "dr";
        case LearnerKind::tarnet: return "tarnet";
    }
    return "?";
}

inline LearnerKind learner_from_string(const std::string& s) {
    if (s == "s") return LearnerKind::s;
    if (s == "t") return LearnerKind::t;
    if (s == "dr") return LearnerKind::dr;
    if (s == "tarnet") return LearnerKind::tarnet;
    throw TrainError("unknown learner '" + s + "'");
}

/// Layer/unit counts. Defaults give every nuisance function the same
/// capacity as the single-domain learners it is compared against.
struct ArchConfig {
    std::size_t encoder_units = 100;  // D_s and D_p
    std::size_t stack_units = 100;
    std::size_t stack_layers = 5;
    std::size_t tarnet_stack_layers = 2;
    std::size_t tower_layers = 3;
    std::size_t tower_units = 100;
    std::size_t baseline_layers = 5;
    std::size_t baseline_units = 200;
    std::size_t baseline_rep_layers = 3;
    std::size_t baseline_rep_units = 200;
    std::size_t baseline_head_layers = 2;
    std::size_t baseline_head_units = 100;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_per_domain = 128;  // B_T = B_R = B
    double orth_weight = 0.01;
    std::size_t max_epochs = 1000;
    std::size_t patience = 10;  // epoch-end evaluations without improvement
    std::uint64_t seed = 0;

    // ablation switches
    bool disable_orth_z = false;
    bool disable_orth_po = false;
    bool freeze_shared_stack = false;  // "- PO sharing"

    bool dr_oracle_nuisances = false;  // diagnostic: stage 1 from simulator truth
    double propensity_clip = 0.01;

    ArchConfig arch;

    void validate() const {
        if (learning_rate <= 0.0) throw TrainError("train config: learning_rate must be > 0");
        if (batch_per_domain < 1) throw TrainError("train config: batch_per_domain must be >= 1");
        if (orth_weight < 0.0) throw TrainError("train config: orth_weight must be >= 0");
        if (max_epochs < 1 || patience < 1) throw TrainError("train config: epochs/patience must be >= 1");
        if (!(propensity_clip > 0.0 && propensity_clip < 0.5))
            throw TrainError("train config: propensity_clip must lie in (0, 0.5)");
    }

    double orth_z_weight() const { return disable_orth_z ? 0.0 : orth_weight; }
    double orth_po_weight() const { return disable_orth_po ? 0.0 : orth_weight; }
};

struct TrainHistory {
    std::vector<double> train_loss;  // epoch mean of the composite loss
    std::vector<double> val_loss;    // epoch-end target-validation loss
    std::size_t best_epoch = 0;
    double best_val = std::numeric_limits<double>::infinity();
};

class CateModel {
public:
    virtual ~CateModel() = default;
    virtual std::vector<double> predict_cate(const Matrix& x_target) = 0;
    virtual const TrainHistory& history() const = 0;
    virtual std::vector<nn::Param*> parameters() = 0;
};

// ---------------------------------------------------------------------------
// small helpers shared by the training loops

inline std::vector<double> gather(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

inline std::vector<double> as_double(const std::vector<int>& v) {
    return {v.begin(), v.end()};
}

/// inv_scale * sum((pred-target)^2) with matching gradient; the scale lets a
/// domain batch that is split across treatment arms keep one normalization.
inline double sq_err_sum(const Matrix& pred, const std::vector<double>& target, double inv_scale,
                         Matrix* dpred = nullptr) {
    if (pred.cols() != 1 || pred.rows() != target.size()) throw ShapeError("sq_err_sum: shape mismatch");
    double acc = 0.0;
    if (dpred) *dpred = Matrix(pred.rows(), 1);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double diff = pred(i, 0) - target[i];
        acc += diff * diff;
        if (dpred) (*dpred)(i, 0) = 2.0 * inv_scale * diff;
    }
    return inv_scale * acc;
}

/// inv_scale-weighted BCE from logits, as in nn::loss_bce_logits.
inline double bce_logits_sum(const Matrix& logits, const std::vector<double>& target, double inv_scale,
                             Matrix* dlogits = nullptr) {
    if (logits.cols() != 1 || logits.rows() != target.size())
        throw ShapeError("bce_logits_sum: shape mismatch");
    double acc = 0.0;
    if (dlogits) *dlogits = Matrix(logits.rows(), 1);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double z = logits(i, 0);
        const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        acc += softplus - target[i] * z;
        if (dlogits) (*dlogits)(i, 0) = inv_scale * (nn::sigmoid(z) - target[i]);
    }
    return inv_scale * acc;
}

inline void check_arms_present(const Dataset& ds, const char* what) {
    bool has[2] = {false, false};
    for (int w : ds.w) has[w] = true;
    if (!has[0] || !has[1])
        throw TrainError(std::string(what) + ": treatment arm " + (has[0] ? "1" : "0") +
                         " absent from the training set");
}

/// Splits dataset row indices by treatment arm.
inline std::array<std::vector<std::size_t>, 2> split_by_arm(const Dataset& ds,
                                                            const std::vector<std::size_t>& idx) {
    std::array<std::vector<std::size_t>, 2> arms;
    for (auto i : idx) arms[static_cast<std::size_t>(ds.w[i])].push_back(i);
    return arms;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

/// Paired minibatch loop with early stopping on the target-validation loss.
/// Per epoch: ceil(max(n_src, n_tgt)/B) steps; the larger domain is consumed
/// as shuffled chunks, the smaller is resampled with replacement at size B.
/// Restores the best-validation snapshot before returning.
inline TrainHistory run_train_loop(
    std::size_t n_src, std::size_t n_tgt, const TrainConfig& cfg,
    const std::function<double(const std::vector<std::size_t>&, const std::vector<std::size_t>&)>& step,
    const std::function<double()>& validation, const std::vector<nn::Param*>& params) {
    if (n_tgt == 0) throw TrainError("training: empty target training set");
    Rng rng(derive_seed(cfg.seed, "batching"));
    const std::size_t batch = cfg.batch_per_domain;
    const std::size_t n_max = std::max(n_src, n_tgt);
    const std::size_t steps = (n_max + batch - 1) / batch;

    TrainHistory hist;
    std::vector<Matrix> best;
    std::size_t since_best = 0;

    auto snapshot = [&] {
        best.clear();
        for (const nn::Param* p : params) best.push_back(p->value);
    };
    auto restore = [&] {
        for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
    };

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> perm_src, perm_tgt;
        if (n_src == n_max && n_src > 0) perm_src = rng.permutation(n_src);
        if (n_tgt == n_max) perm_tgt = rng.permutation(n_tgt);

        auto resample = [&](std::size_t n) {
            std::vector<std::size_t> idx(batch);
            for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
            return idx;
        };
        auto chunk = [&](const std::vector<std::size_t>& perm, std::size_t s) {
            const std::size_t lo = s * batch;
            const std::size_t hi = std::min(perm.size(), lo + batch);
            return std::vector<std::size_t>(perm.begin() + lo, perm.begin() + hi);
        };

        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            std::vector<std::size_t> src_idx, tgt_idx;
            if (n_src > 0) src_idx = perm_src.empty() ? resample(n_src) : chunk(perm_src, s);
            tgt_idx = perm_tgt.empty() ? resample(n_tgt) : chunk(perm_tgt, s);
            const double loss = step(src_idx, tgt_idx);
            if (!std::isfinite(loss)) throw TrainError("training diverged: non-finite loss");
            epoch_loss += loss;
        }
        const double val = validation();
        if (!std::isfinite(val)) throw TrainError("training diverged: non-finite validation loss");
        hist.train_loss.push_back(epoch_loss / static_cast<double>(steps));
        hist.val_loss.push_back(val);

        if (val < hist.best_val) {
            hist.best_val = val;
            hist.best_epoch = epoch;
            snapshot();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    restore();
    return hist;
}

/// Feature widths of the two domains; everything a learner's architecture
/// depends on besides the train config.
struct DomainWidths {
    std::size_t d_shared = 0;
    std::size_t d_source = 0;  // full source feature vector
    std::size_t d_target = 0;  // full target feature vector

    static DomainWidths of(const Dataset& src, const Dataset& tgt) {
        return {tgt.d_shared, src.x.cols(), tgt.x.cols()};
    }
};

// ---------------------------------------------------------------------------
// HTCE building-block composite: one encoder triple feeding one stack

/// Encoder triple plus a single shared/private stack. This is the whole model
/// for the HTCE-S-learner, the propensity estimator and the DR second stage,
/// and one treatment arm of the HTCE-T-learner.
class Bundle {
public:
    Bundle() = default;

    Bundle(const std::string& name, std::size_t d_shared, std::size_t d_source, std::size_t d_target,
           bool treatment_in_shared, OutputKind psi, const ArchConfig& arch, std::size_t stack_layers)
        : d_shared_(d_shared),
          with_w_(treatment_in_shared),
          enc_(name + ".enc", d_shared + (treatment_in_shared ? 1 : 0), d_source, d_target,
               arch.encoder_units, arch.encoder_units),
          stack_(name + ".stack", 2 * arch.encoder_units, stack_layers, arch.stack_units, psi) {}

    void init(Rng& rng) {
        enc_.init(rng);
        stack_.init(rng);
    }

    Representation encode_batch(const Matrix& x, const std::vector<double>* w, DomainTag d) {
        Matrix xs = slice_cols(x, 0, d_shared_);
        if (with_w_) {
            if (!w || w->size() != x.rows()) throw ShapeError("bundle: treatment column missing");
            Matrix xsw(x.rows(), d_shared_ + 1);
            for (std::size_t i = 0; i < x.rows(); ++i) {
                for (std::size_t j = 0; j < d_shared_; ++j) xsw(i, j) = xs(i, j);
                xsw(i, d_shared_) = (*w)[i];
            }
            return enc_.encode(xsw, x, d);
        }
        return enc_.encode(xs, x, d);
    }

    Matrix forward_logits(const Representation& rep, DomainTag d) {
        return stack_.forward_logits(rep.concat(), d);
    }

    void backward(const Matrix& dlogits, const Representation& rep, DomainTag d,
                  const blocks::OrthZTerm* orth_z, double orth_z_weight) {
        Matrix drep = stack_.backward(dlogits, d);
        Matrix dzs = slice_cols(drep, 0, enc_.d_s());
        Matrix dzp = slice_cols(drep, enc_.d_s(), enc_.d_p());
        if (orth_z && orth_z_weight > 0.0) orth_z->grad(rep, orth_z_weight, dzs, dzp);
        enc_.backward(dzs, dzp, d);
    }

    blocks::EncoderTriple& encoders() { return enc_; }
    blocks::SharedPrivateStack& stack() { return stack_; }
    bool uses_treatment_input() const { return with_w_; }

    void collect_params(std::vector<nn::Param*>& out) {
        enc_.collect_params(out);
        stack_.collect_params(out);
    }

    void collect_trainable(std::vector<nn::Param*>& out, bool freeze_shared_stack) {
        enc_.collect_params(out);
        if (freeze_shared_stack) {
            stack_.collect_private_params(DomainTag::source, out);
            stack_.collect_private_params(DomainTag::target, out);
        } else {
            stack_.collect_params(out);
        }
    }

private:
    std::size_t d_shared_ = 0;
    bool with_w_ = false;
    blocks::EncoderTriple enc_;
    blocks::SharedPrivateStack stack_;
};

enum class BundleLoss { mse, bce };

/// A trainable single-stack HTCE model over both domains: the HTCE-S-learner
/// (treatment flag in the shared input, MSE on factual outcomes), the
/// HTCE-propensity estimator (BCE on treatments) and the DR pseudo-outcome
/// regressor (MSE on supplied targets) are all instances of this.
class SingleStackModel {
public:
    SingleStackModel() = default;

    SingleStackModel(const std::string& name, const DomainWidths& w, bool treatment_in_shared,
                     BundleLoss loss, const TrainConfig& cfg)
        : cfg_(cfg),
          loss_(loss),
          bundle_(name, w.d_shared, w.d_source, w.d_target, treatment_in_shared,
                  loss == BundleLoss::bce ? OutputKind::sigmoid : OutputKind::linear, cfg.arch,
                  cfg.arch.stack_layers) {}

    void init(Rng& rng) {
        bundle_.init(rng);
        if (cfg_.freeze_shared_stack) bundle_.stack().zero_shared_weights();
    }

    /// One gradient accumulation over a paired minibatch; targets are aligned
    /// with the full datasets, indices select the batch rows. No update.
    double accumulate_step(const Dataset& src, const std::vector<std::size_t>& src_idx,
                           const std::vector<double>& src_targets, const Dataset& tgt,
                           const std::vector<std::size_t>& tgt_idx,
                           const std::vector<double>& tgt_targets) {
        zero_grads();
        double loss_y = 0.0, loss_z = 0.0;
        const double wz = cfg_.orth_z_weight();

        auto domain_pass = [&](const Dataset& ds, const std::vector<std::size_t>& idx,
                               const std::vector<double>& targets, DomainTag d) {
            if (idx.empty()) return;
            const Matrix x = take_rows(ds.x, idx);
            const std::vector<double> wvals = gather(as_double(ds.w), idx);
            const std::vector<double> t = gather(targets, idx);
            Representation rep = bundle_.encode_batch(x, &wvals, d);
            blocks::OrthZTerm oz;
            oz.add(rep);
            Matrix logits = bundle_.forward_logits(rep, d);
            Matrix dlogits;
            const double inv = 1.0 / static_cast<double>(idx.size());
            loss_y += loss_ == BundleLoss::mse ? sq_err_sum(logits, t, inv, &dlogits)
                                               : bce_logits_sum(logits, t, inv, &dlogits);
            loss_z += oz.loss();
            bundle_.backward(dlogits, rep, d, &oz, wz);
        };

        domain_pass(src, src_idx, src_targets, DomainTag::source);
        domain_pass(tgt, tgt_idx, tgt_targets, DomainTag::target);

        const double lpo = bundle_.stack().orth_po_loss_and_grad(cfg_.orth_po_weight(), !src_idx.empty(),
                                                                 !tgt_idx.empty());
        return loss_y + wz * loss_z + cfg_.orth_po_weight() * lpo;
    }

    TrainHistory train(const SplitDataset& src, const SplitDataset& tgt,
                       const std::vector<double>& src_train_targets,
                       const std::vector<double>& tgt_train_targets,
                       const std::vector<double>& tgt_val_targets) {
        Rng init_rng(derive_seed(cfg_.seed, "init"));
        init(init_rng);
        auto trainable = trainable_params();
        nn::Adam adam({cfg_.learning_rate});
        auto step = [&](const std::vector<std::size_t>& si, const std::vector<std::size_t>& ti) {
            const double loss = accumulate_step(src.train, si, src_train_targets, tgt.train, ti,
                                                tgt_train_targets);
            adam.step(trainable);
            return loss;
        };
        auto validation = [&] {
            Matrix logits = predict_logits(tgt.validation.x, &tgt.validation.w, DomainTag::target);
            return loss_ == BundleLoss::mse ? sq_err_sum(logits, tgt_val_targets,
                                                         1.0 / static_cast<double>(tgt_val_targets.size()))
                                            : bce_logits_sum(logits, tgt_val_targets,
                                                             1.0 / static_cast<double>(tgt_val_targets.size()));
        };
        return run_train_loop(src.train.n(), tgt.train.n(), cfg_, step, validation, all_params());
    }

    /// Forward pass without gradient bookkeeping side effects that matter;
    /// w may be null unless the model concatenates the treatment flag.
    Matrix predict_logits(const Matrix& x, const std::vector<int>* w, DomainTag d) {
        std::vector<double> wvals;
        if (bundle_.uses_treatment_input()) {
            if (!w) throw ShapeError("predict: model needs a treatment column");
            wvals = as_double(*w);
        }
        Representation rep = bundle_.encode_batch(x, &wvals, d);
        return bundle_.forward_logits(rep, d);
    }

    Matrix predict_logits_fixed_w(const Matrix& x, double w_value, DomainTag d) {
        std::vector<int> w(x.rows(), static_cast<int>(w_value));
        return predict_logits(x, &w, d);
    }

    Bundle& bundle() { return bundle_; }
    const TrainConfig& config() const { return cfg_; }

    std::vector<nn::Param*> all_params() {
        std::vector<nn::Param*> out;
        bundle_.collect_params(out);
        return out;
    }

    std::vector<nn::Param*> trainable_params() {
        std::vector<nn::Param*> out;
        bundle_.collect_trainable(out, cfg_.freeze_shared_stack);
        return out;
    }

private:
    void zero_grads() {
        for (nn::Param* p : all_params()) p->zero_grad();
    }

    TrainConfig cfg_;
    BundleLoss loss_ = BundleLoss::mse;
    Bundle bundle_;
};

// ---------------------------------------------------------------------------
// HTCE-S-learner

class HtceSLearner final : public CateModel {
public:
    static std::unique_ptr<HtceSLearner> make(const DomainWidths& w, const TrainConfig& cfg) {
        cfg.validate();
        auto m = std::unique_ptr<HtceSLearner>(new HtceSLearner());
        m->model_ = SingleStackModel("main", w, true, BundleLoss::mse, cfg);
        Rng rng(derive_seed(cfg.seed, "init"));
        m->model_.init(rng);
        return m;
    }

    static std::unique_ptr<HtceSLearner> train(const SplitDataset& src, const SplitDataset& tgt,
                                               const TrainConfig& cfg) {
        auto m = make(DomainWidths::of(src.train, tgt.train), cfg);
        check_arms_present(src.train, "htce-s (source)");
        check_arms_present(tgt.train, "htce-s (target)");
        m->hist_ = m->model_.train(src, tgt, src.train.y, tgt.train.y, tgt.validation.y);
        return m;
    }

    std::vector<double> predict_cate(const Matrix& x) override {
        Matrix g1 = model_.predict_logits_fixed_w(x, 1.0, DomainTag::target);
        Matrix g0 = model_.predict_logits_fixed_w(x, 0.0, DomainTag::target);
        std::vector<double> tau(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = g1(i, 0) - g0(i, 0);
        return tau;
    }

    const TrainHistory& history() const override { return hist_; }
    std::vector<nn::Param*> parameters() override { return model_.all_params(); }
    SingleStackModel& model() { return model_; }

private:
    HtceSLearner() = default;
    SingleStackModel model_;
    TrainHistory hist_;
};

// ---------------------------------------------------------------------------
// HTCE-T-learner

class HtceTLearner final : public CateModel {
public:
    static std::unique_ptr<HtceTLearner> make(const DomainWidths& w, const TrainConfig& cfg,
                                              const std::string& prefix = "") {
        cfg.validate();
        auto m = std::unique_ptr<HtceTLearner>(new HtceTLearner());
        m->cfg_ = cfg;
        for (int a = 0; a < 2; ++a)
            m->arms_[a] = Bundle(prefix + "arm" + std::to_string(a), w.d_shared, w.d_source,
                                 w.d_target, false, OutputKind::linear, cfg.arch, cfg.arch.stack_layers);
        Rng rng(derive_seed(cfg.seed, "init"));
        for (auto& arm : m->arms_) {
            arm.init(rng);
            if (cfg.freeze_shared_stack) arm.stack().zero_shared_weights();
        }
        return m;
    }

    static std::unique_ptr<HtceTLearner> train(const SplitDataset& src, const SplitDataset& tgt,
                                               const TrainConfig& cfg, const std::string& prefix = "") {
        check_arms_present(src.train, "htce-t (source)");
        check_arms_present(tgt.train, "htce-t (target)");
        auto m = make(DomainWidths::of(src.train, tgt.train), cfg, prefix);
        auto trainable = m->trainable_params();
        nn::Adam adam({cfg.learning_rate});
        auto step = [&](const std::vector<std::size_t>& si, const std::vector<std::size_t>& ti) {
            const double loss = m->accumulate_step(src.train, si, tgt.train, ti);
            adam.step(trainable);
            return loss;
        };
        auto validation = [&] { return m->factual_mse(tgt.validation); };
        m->hist_ = run_train_loop(src.train.n(), tgt.train.n(), cfg, step, validation, m->parameters());
        return m;
    }

    /// One composite-loss gradient accumulation, exposed so the gradient
    /// isolation properties can be probed on raw minibatches.
    double accumulate_step(const Dataset& src, const std::vector<std::size_t>& src_idx,
                           const Dataset& tgt, const std::vector<std::size_t>& tgt_idx) {
        zero_grads();
        double loss_y = 0.0, loss_z = 0.0;
        const double wz = cfg_.orth_z_weight();

        auto domain_pass = [&](const Dataset& ds, const std::vector<std::size_t>& idx, DomainTag d) {
            if (idx.empty()) return;
            const auto arm_idx = split_by_arm(ds, idx);
            Representation reps[2];
            blocks::OrthZTerm oz;
            for (int a = 0; a < 2; ++a) {
                if (arm_idx[a].empty()) continue;
                reps[a] = arms_[a].encode_batch(take_rows(ds.x, arm_idx[a]), nullptr, d);
                oz.add(reps[a]);
            }
            loss_z += oz.loss();
            const double inv = 1.0 / static_cast<double>(idx.size());
            for (int a = 0; a < 2; ++a) {
                if (arm_idx[a].empty()) continue;
                Matrix logits = arms_[a].forward_logits(reps[a], d);
                Matrix dlogits;
                loss_y += sq_err_sum(logits, gather(ds.y, arm_idx[a]), inv, &dlogits);
                arms_[a].backward(dlogits, reps[a], d, &oz, wz);
            }
        };

        domain_pass(src, src_idx, DomainTag::source);
        domain_pass(tgt, tgt_idx, DomainTag::target);

        double lpo = 0.0;
        for (auto& arm : arms_)
            lpo += arm.stack().orth_po_loss_and_grad(cfg_.orth_po_weight(), !src_idx.empty(),
                                                     !tgt_idx.empty());
        return loss_y + wz * loss_z + cfg_.orth_po_weight() * lpo;
    }

    /// Potential-outcome predictions from the two arm bundles.
    std::pair<std::vector<double>, std::vector<double>> predict_potential(const Matrix& x, DomainTag d) {
        Matrix mu0 = arm_logits(0, x, d);
        Matrix mu1 = arm_logits(1, x, d);
        std::vector<double> m0(x.rows()), m1(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            m0[i] = mu0(i, 0);
            m1[i] = mu1(i, 0);
        }
        return {std::move(m0), std::move(m1)};
    }

    std::vector<double> predict_cate(const Matrix& x) override {
        auto [m0, m1] = predict_potential(x, DomainTag::target);
        std::vector<double> tau(m0.size());
        for (std::size_t i = 0; i < tau.size(); ++i) tau[i] = m1[i] - m0[i];
        return tau;
    }

    double factual_mse(const Dataset& ds) {
        const auto arm_idx = split_by_arm(ds, all_indices(ds.n()));
        double acc = 0.0;
        for (int a = 0; a < 2; ++a) {
            if (arm_idx[a].empty()) continue;
            Matrix logits = arm_logits(a, take_rows(ds.x, arm_idx[a]), ds.domain);
            acc += sq_err_sum(logits, gather(ds.y, arm_idx[a]), 1.0 / static_cast<double>(ds.n()));
        }
        return acc;
    }

    const TrainHistory& history() const override { return hist_; }

    std::vector<nn::Param*> parameters() override {
        std::vector<nn::Param*> out;
        for (auto& arm : arms_) arm.collect_params(out);
        return out;
    }

    std::vector<nn::Param*> trainable_params() {
        std::vector<nn::Param*> out;
        for (auto& arm : arms_) arm.collect_trainable(out, cfg_.freeze_shared_stack);
        return out;
    }

    Bundle& arm(int a) { return arms_[a]; }

private:
    HtceTLearner() = default;

    Matrix arm_logits(int a, const Matrix& x, DomainTag d) {
        Representation rep = arms_[a].encode_batch(x, nullptr, d);
        return arms_[a].forward_logits(rep, d);
    }

    void zero_grads() {
        for (nn::Param* p : parameters()) p->zero_grad();
    }

    TrainConfig cfg_;
    Bundle arms_[2];
    TrainHistory hist_;
};

// ---------------------------------------------------------------------------
// HTCE propensity estimator (appendix building block)

class HtcePropensity {
public:
    HtcePropensity() = default;

    HtcePropensity(const DomainWidths& w, const TrainConfig& cfg,
                   const std::string& prefix = "propensity") {
        model_ = SingleStackModel(prefix, w, false, BundleLoss::bce, cfg);
        Rng rng(derive_seed(cfg.seed, "init"));
        model_.init(rng);
    }

    TrainHistory train(const SplitDataset& src, const SplitDataset& tgt) {
        return hist_ = model_.train(src, tgt, as_double(src.train.w), as_double(tgt.train.w),
                                    as_double(tgt.validation.w));
    }

    /// pi_hat in (0,1).
    std::vector<double> predict(const Matrix& x, DomainTag d) {
        Matrix logits = model_.predict_logits(x, nullptr, d);
        std::vector<double> pi(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) pi[i] = nn::sigmoid(logits(i, 0));
        return pi;
    }

    SingleStackModel& model() { return model_; }
    const TrainHistory& history() const { return hist_; }

private:
    SingleStackModel model_;
    TrainHistory hist_;
};

// ---------------------------------------------------------------------------
// DR pseudo-outcome and the HTCE-DR-learner

/// Doubly-robust pseudo-outcome; with exact nuisances and noiseless outcomes
/// this equals mu1 - mu0 for any propensity strictly inside (0,1).
inline double dr_pseudo_outcome(double y, int w, double mu0_hat, double mu1_hat, double pi_hat) {
    if (!(pi_hat > 0.0 && pi_hat < 1.0)) throw NumericError("dr_pseudo_outcome: pi_hat outside (0,1)");
    const double wd = static_cast<double>(w);
    const double ipw = wd / pi_hat - (1.0 - wd) / (1.0 - pi_hat);
    return ipw * y + (1.0 - wd / pi_hat) * mu1_hat - (1.0 - (1.0 - wd) / (1.0 - pi_hat)) * mu0_hat;
}

class HtceDrLearner final : public CateModel {
public:
    static std::unique_ptr<HtceDrLearner> make(const DomainWidths& w, const TrainConfig& cfg) {
        cfg.validate();
        auto m = std::unique_ptr<HtceDrLearner>(new HtceDrLearner());
        m->cfg_ = cfg;
        m->stage1_ = HtceTLearner::make(w, with_seed(cfg, "dr_stage1"), "stage1.");
        m->propensity_ = HtcePropensity(w, with_seed(cfg, "dr_propensity"), "propensity");
        const TrainConfig stage2_cfg = with_seed(cfg, "dr_stage2");
        m->stage2_ = SingleStackModel("stage2", w, false, BundleLoss::mse, stage2_cfg);
        Rng rng(derive_seed(stage2_cfg.seed, "init"));
        m->stage2_.init(rng);
        return m;
    }

    static std::unique_ptr<HtceDrLearner> train(const SplitDataset& src, const SplitDataset& tgt,
                                                const TrainConfig& cfg) {
        check_arms_present(src.train, "htce-dr (source)");
        check_arms_present(tgt.train, "htce-dr (target)");
        auto m = make(DomainWidths::of(src.train, tgt.train), cfg);

        // Stage 1: potential outcomes + propensity, no cross-fitting.
        if (!cfg.dr_oracle_nuisances) {
            m->stage1_ = HtceTLearner::train(src, tgt, with_seed(cfg, "dr_stage1"), "stage1.");
            m->propensity_.train(src, tgt);
        }

        // Pseudo-outcomes per domain on the training and validation slices.
        const auto ytil_src_train = m->pseudo_outcomes(src.train);
        const auto ytil_tgt_train = m->pseudo_outcomes(tgt.train);
        const auto ytil_tgt_val = m->pseudo_outcomes(tgt.validation);

        m->hist_ = m->stage2_.train(src, tgt, ytil_src_train, ytil_tgt_train, ytil_tgt_val);
        return m;
    }

    std::vector<double> pseudo_outcomes(const Dataset& ds) {
        std::vector<double> mu0, mu1, pi;
        if (cfg_.dr_oracle_nuisances) {
            mu0 = ds.mu0;
            mu1 = ds.mu1;
            pi = ds.pi;
        } else {
            std::tie(mu0, mu1) = stage1_->predict_potential(ds.x, ds.domain);
            pi = propensity_.predict(ds.x, ds.domain);
        }
        std::vector<double> out(ds.n());
        std::size_t clipped = 0;
        for (std::size_t i = 0; i < ds.n(); ++i) {
            double p = std::clamp(pi[i], cfg_.propensity_clip, 1.0 - cfg_.propensity_clip);
            if (p != pi[i]) ++clipped;
            out[i] = dr_pseudo_outcome(ds.y[i], ds.w[i], mu0[i], mu1[i], p);
        }
        if (clipped == ds.n() && ds.n() > 0)
            throw TrainError("htce-dr: propensity collapsed, every estimate at the clip bound");
        return out;
    }

    std::vector<double> predict_cate(const Matrix& x) override {
        Matrix logits = stage2_.predict_logits(x, nullptr, DomainTag::target);
        std::vector<double> tau(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = logits(i, 0);
        return tau;
    }

    const TrainHistory& history() const override { return hist_; }

    std::vector<nn::Param*> parameters() override {
        std::vector<nn::Param*> out = stage1_->parameters();
        for (nn::Param* p : propensity_.model().all_params()) out.push_back(p);
        for (nn::Param* p : stage2_.all_params()) out.push_back(p);
        return out;
    }

    HtceTLearner& stage1() { return *stage1_; }
    HtcePropensity& propensity() { return propensity_; }
    SingleStackModel& stage2() { return stage2_; }

private:
    HtceDrLearner() = default;

    static TrainConfig with_seed(TrainConfig cfg, const char* tag) {
        cfg.seed = derive_seed(cfg.seed, tag);
        return cfg;
    }

    TrainConfig cfg_;
    std::unique_ptr<HtceTLearner> stage1_;
    HtcePropensity propensity_;
    SingleStackModel stage2_;
    TrainHistory hist_;  // stage-2 history; stage-1 histories live on the parts
};

// ---------------------------------------------------------------------------
// HTCE-TARNet

class HtceTarnetLearner final : public CateModel {
public:
    static std::unique_ptr<HtceTarnetLearner> make(const DomainWidths& w, const TrainConfig& cfg) {
        cfg.validate();
        auto m = std::unique_ptr<HtceTarnetLearner>(new HtceTarnetLearner());
        m->cfg_ = cfg;
        const auto& a = cfg.arch;
        m->enc_ = blocks::EncoderTriple("enc", w.d_shared, w.d_source, w.d_target,
                                        a.encoder_units, a.encoder_units);
        const std::vector<std::size_t> tower_widths(a.tower_layers, a.tower_units);
        m->tower_src_ = nn::Mlp("omega.private_source", 2 * a.encoder_units, tower_widths,
                                nn::Activation::relu, nn::Activation::relu);
        m->tower_tgt_ = nn::Mlp("omega.private_target", 2 * a.encoder_units, tower_widths,
                                nn::Activation::relu, nn::Activation::relu);
        for (int arm = 0; arm < 2; ++arm)
            m->stacks_[arm] = blocks::SharedPrivateStack("arm" + std::to_string(arm) + ".stack",
                                                         a.tower_units, a.tarnet_stack_layers,
                                                         a.stack_units, OutputKind::linear);
        Rng rng(derive_seed(cfg.seed, "init"));
        m->enc_.init(rng);
        m->tower_src_.init(rng);
        m->tower_tgt_.init(rng);
        for (auto& s : m->stacks_) {
            s.init(rng);
            if (cfg.freeze_shared_stack) s.zero_shared_weights();
        }
        return m;
    }

    static std::unique_ptr<HtceTarnetLearner> train(const SplitDataset& src, const SplitDataset& tgt,
                                                    const TrainConfig& cfg) {
        check_arms_present(src.train, "htce-tarnet (source)");
        check_arms_present(tgt.train, "htce-tarnet (target)");
        auto m = make(DomainWidths::of(src.train, tgt.train), cfg);
        auto trainable = m->trainable_params();
        nn::Adam adam({cfg.learning_rate});
        auto step = [&](const std::vector<std::size_t>& si, const std::vector<std::size_t>& ti) {
            const double loss = m->accumulate_step(src.train, si, tgt.train, ti);
            adam.step(trainable);
            return loss;
        };
        auto validation = [&] { return m->factual_mse(tgt.validation); };
        m->hist_ = run_train_loop(src.train.n(), tgt.train.n(), cfg, step, validation, m->parameters());
        return m;
    }

    double accumulate_step(const Dataset& src, const std::vector<std::size_t>& src_idx,
                           const Dataset& tgt, const std::vector<std::size_t>& tgt_idx) {
        zero_grads();
        double loss_y = 0.0, loss_z = 0.0;
        const double wz = cfg_.orth_z_weight();

        auto domain_pass = [&](const Dataset& ds, const std::vector<std::size_t>& idx, DomainTag d) {
            if (idx.empty()) return;
            const Matrix x = take_rows(ds.x, idx);
            Representation rep = enc_.encode(slice_cols(x, 0, ds.d_shared), x, d);
            blocks::OrthZTerm oz;
            oz.add(rep);
            loss_z += oz.loss();

            nn::Mlp& tower = d == DomainTag::source ? tower_src_ : tower_tgt_;
            Matrix phi = tower.forward(rep.concat());

            std::array<std::vector<std::size_t>, 2> arm_pos;
            for (std::size_t k = 0; k < idx.size(); ++k)
                arm_pos[static_cast<std::size_t>(ds.w[idx[k]])].push_back(k);

            Matrix dphi(phi.rows(), phi.cols());
            const double inv = 1.0 / static_cast<double>(idx.size());
            for (int a = 0; a < 2; ++a) {
                if (arm_pos[a].empty()) continue;
                std::vector<double> y_a;
                y_a.reserve(arm_pos[a].size());
                for (auto k : arm_pos[a]) y_a.push_back(ds.y[idx[k]]);
                Matrix logits = stacks_[a].forward_logits(take_rows(phi, arm_pos[a]), d);
                Matrix dlogits;
                loss_y += sq_err_sum(logits, y_a, inv, &dlogits);
                Matrix dphi_a = stacks_[a].backward(dlogits, d);
                scatter_add_rows(dphi, dphi_a, arm_pos[a]);
            }

            Matrix drep = tower.backward(dphi);
            Matrix dzs = slice_cols(drep, 0, enc_.d_s());
            Matrix dzp = slice_cols(drep, enc_.d_s(), enc_.d_p());
            if (wz > 0.0) oz.grad(rep, wz, dzs, dzp);
            enc_.backward(dzs, dzp, d);
        };

        domain_pass(src, src_idx, DomainTag::source);
        domain_pass(tgt, tgt_idx, DomainTag::target);

        double lpo = 0.0;
        for (auto& s : stacks_)
            lpo += s.orth_po_loss_and_grad(cfg_.orth_po_weight(), !src_idx.empty(), !tgt_idx.empty());
        return loss_y + wz * loss_z + cfg_.orth_po_weight() * lpo;
    }

    std::vector<double> predict_cate(const Matrix& x) override {
        Matrix phi = representation(x, DomainTag::target);
        Matrix g0 = stacks_[0].forward_logits(phi, DomainTag::target);
        Matrix g1 = stacks_[1].forward_logits(phi, DomainTag::target);
        std::vector<double> tau(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = g1(i, 0) - g0(i, 0);
        return tau;
    }

    double factual_mse(const Dataset& ds) {
        Matrix phi = representation(ds.x, ds.domain);
        const auto arm_idx = split_by_arm(ds, all_indices(ds.n()));
        double acc = 0.0;
        for (int a = 0; a < 2; ++a) {
            if (arm_idx[a].empty()) continue;
            Matrix logits = stacks_[a].forward_logits(take_rows(phi, arm_idx[a]), ds.domain);
            acc += sq_err_sum(logits, gather(ds.y, arm_idx[a]), 1.0 / static_cast<double>(ds.n()));
        }
        return acc;
    }

    const TrainHistory& history() const override { return hist_; }

    std::vector<nn::Param*> parameters() override {
        std::vector<nn::Param*> out;
        enc_.collect_params(out);
        tower_src_.collect_params(out);
        tower_tgt_.collect_params(out);
        for (auto& s : stacks_) s.collect_params(out);
        return out;
    }

    std::vector<nn::Param*> trainable_params() {
        std::vector<nn::Param*> out;
        enc_.collect_params(out);
        tower_src_.collect_params(out);
        tower_tgt_.collect_params(out);
        for (auto& s : stacks_) {
            if (cfg_.freeze_shared_stack) {
                s.collect_private_params(DomainTag::source, out);
                s.collect_private_params(DomainTag::target, out);
            } else {
                s.collect_params(out);
            }
        }
        return out;
    }

    blocks::SharedPrivateStack& stack(int arm) { return stacks_[arm]; }

private:
    HtceTarnetLearner() = default;

    Matrix representation(const Matrix& x, DomainTag d) {
        Representation rep = enc_.encode(slice_cols(x, 0, enc_.shared_in()), x, d);
        nn::Mlp& tower = d == DomainTag::source ? tower_src_ : tower_tgt_;
        return tower.forward(rep.concat());
    }

    void zero_grads() {
        for (nn::Param* p : parameters()) p->zero_grad();
    }

    TrainConfig cfg_;
    blocks::EncoderTriple enc_;
    nn::Mlp tower_src_, tower_tgt_;
    blocks::SharedPrivateStack stacks_[2];
    TrainHistory hist_;
};

}  // namespace htce::learners

#include "htce/baselines.hpp"
