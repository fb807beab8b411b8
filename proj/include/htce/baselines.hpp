#pragma once

#include "htce/learners.hpp"

namespace htce::learners {

enum class BaselineMode { target_only, shared_features_only };

inline const char* to_string(BaselineMode m) {
    return m == BaselineMode::target_only ? "target_only" : "shared_features_only";
}

/// Single-domain CATE learners trained on the target dataset alone, either on
/// its full feature vector or restricted to the shared feature block. These
/// are the comparison points the transfer learners are measured against.
class BaselineLearner final : public CateModel {
public:
    static std::unique_ptr<BaselineLearner> train(const SplitDataset& tgt, LearnerKind kind,
                                                  BaselineMode mode, const TrainConfig& cfg) {
        cfg.validate();
        auto m = make({tgt.train.d_shared, 0, tgt.train.x.cols()}, kind, mode, cfg);
        if (kind != LearnerKind::s) check_arms_present(tgt.train, "baseline (target)");

        const Matrix x_train = m->prep(tgt.train.x);
        const Matrix x_val = m->prep(tgt.validation.x);

        switch (kind) {
            case LearnerKind::s: m->train_s(tgt, x_train, x_val); break;
            case LearnerKind::t: m->train_t(tgt, x_train, x_val); break;
            case LearnerKind::tarnet: m->train_tarnet(tgt, x_train, x_val); break;
            case LearnerKind::dr: m->train_dr(tgt, x_train, x_val); break;
        }
        return m;
    }

    static std::unique_ptr<BaselineLearner> make(const DomainWidths& w, LearnerKind kind,
                                                 BaselineMode mode, const TrainConfig& cfg) {
        auto m = std::unique_ptr<BaselineLearner>(new BaselineLearner());
        m->kind_ = kind;
        m->mode_ = mode;
        m->cfg_ = cfg;
        m->d_shared_ = w.d_shared;
        m->d_used_ = mode == BaselineMode::shared_features_only ? w.d_shared : w.d_target;
        const auto& a = cfg.arch;
        const std::vector<std::size_t> body(a.baseline_layers, a.baseline_units);
        auto widths = [&](std::size_t extra_out) {
            std::vector<std::size_t> w = body;
            w.push_back(extra_out);
            return w;
        };
        Rng rng(derive_seed(cfg.seed, "init"));
        switch (kind) {
            case LearnerKind::s:
                m->net_[0] = nn::Mlp("baseline.mu", m->d_used_ + 1, widths(1), nn::Activation::relu,
                                     nn::Activation::linear);
                m->net_[0].init(rng);
                break;
            case LearnerKind::t:
                for (int w = 0; w < 2; ++w) {
                    m->net_[w] = nn::Mlp("baseline.mu" + std::to_string(w), m->d_used_, widths(1),
                                         nn::Activation::relu, nn::Activation::linear);
                    m->net_[w].init(rng);
                }
                break;
            case LearnerKind::dr:
                for (int w = 0; w < 2; ++w) {
                    m->net_[w] = nn::Mlp("baseline.mu" + std::to_string(w), m->d_used_, widths(1),
                                         nn::Activation::relu, nn::Activation::linear);
                    m->net_[w].init(rng);
                }
                m->pi_net_ = nn::Mlp("baseline.pi", m->d_used_, widths(1), nn::Activation::relu,
                                     nn::Activation::linear);
                m->pi_net_.init(rng);
                m->tau_net_ = nn::Mlp("baseline.tau", m->d_used_, widths(1), nn::Activation::relu,
                                      nn::Activation::linear);
                m->tau_net_.init(rng);
                break;
            case LearnerKind::tarnet: {
                const std::vector<std::size_t> rep(a.baseline_rep_layers, a.baseline_rep_units);
                m->rep_ = nn::Mlp("baseline.rep", m->d_used_, rep, nn::Activation::relu,
                                  nn::Activation::relu);
                m->rep_.init(rng);
                std::vector<std::size_t> head(a.baseline_head_layers, a.baseline_head_units);
                head.push_back(1);
                for (int w = 0; w < 2; ++w) {
                    m->net_[w] = nn::Mlp("baseline.head" + std::to_string(w), a.baseline_rep_units,
                                         head, nn::Activation::relu, nn::Activation::linear);
                    m->net_[w].init(rng);
                }
                break;
            }
        }
        return m;
    }

    std::vector<double> predict_cate(const Matrix& x_full) override {
        const Matrix x = prep(x_full);
        std::vector<double> tau(x.rows());
        switch (kind_) {
            case LearnerKind::s: {
                Matrix f1 = net_[0].forward(with_w(x, 1.0));
                Matrix f0 = net_[0].forward(with_w(x, 0.0));
                for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = f1(i, 0) - f0(i, 0);
                break;
            }
            case LearnerKind::t: {
                Matrix m1 = net_[1].forward(x);
                Matrix m0 = net_[0].forward(x);
                for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = m1(i, 0) - m0(i, 0);
                break;
            }
            case LearnerKind::dr: {
                Matrix t = tau_net_.forward(x);
                for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = t(i, 0);
                break;
            }
            case LearnerKind::tarnet: {
                Matrix phi = rep_.forward(x);
                Matrix g1 = net_[1].forward(phi);
                Matrix g0 = net_[0].forward(phi);
                for (std::size_t i = 0; i < x.rows(); ++i) tau[i] = g1(i, 0) - g0(i, 0);
                break;
            }
        }
        return tau;
    }

    const TrainHistory& history() const override { return hist_; }

    std::vector<nn::Param*> parameters() override {
        std::vector<nn::Param*> out;
        switch (kind_) {
            case LearnerKind::s: net_[0].collect_params(out); break;
            case LearnerKind::t:
                net_[0].collect_params(out);
                net_[1].collect_params(out);
                break;
            case LearnerKind::dr:
                net_[0].collect_params(out);
                net_[1].collect_params(out);
                pi_net_.collect_params(out);
                tau_net_.collect_params(out);
                break;
            case LearnerKind::tarnet:
                rep_.collect_params(out);
                net_[0].collect_params(out);
                net_[1].collect_params(out);
                break;
        }
        return out;
    }

    LearnerKind kind() const { return kind_; }
    BaselineMode mode() const { return mode_; }
    std::size_t input_width() const { return d_used_; }

private:
    BaselineLearner() = default;

    Matrix prep(const Matrix& x) const {
        return mode_ == BaselineMode::shared_features_only ? slice_cols(x, 0, d_shared_) : x;
    }

    static Matrix with_w(const Matrix& x, double w) {
        Matrix out(x.rows(), x.cols() + 1);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
            out(i, x.cols()) = w;
        }
        return out;
    }

    static Matrix with_w_col(const Matrix& x, const std::vector<double>& w) {
        Matrix out(x.rows(), x.cols() + 1);
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
            out(i, x.cols()) = w[i];
        }
        return out;
    }

    TrainHistory fit(std::size_t n_train, TrainConfig cfg, const char* tag,
                     const std::function<double(const std::vector<std::size_t>&)>& step,
                     const std::function<double()>& validation,
                     const std::vector<nn::Param*>& params) {
        cfg.seed = derive_seed(cfg.seed, tag);
        nn::Adam adam({cfg.learning_rate});
        auto paired_step = [&](const std::vector<std::size_t>&, const std::vector<std::size_t>& ti) {
            for (nn::Param* p : params) p->zero_grad();
            const double loss = step(ti);
            adam.step(params);
            return loss;
        };
        return run_train_loop(0, n_train, cfg, paired_step, validation, params);
    }

    void train_s(const SplitDataset& tgt, const Matrix& x_train, const Matrix& x_val) {
        const auto w_train = as_double(tgt.train.w);
        const auto w_val = as_double(tgt.validation.w);
        std::vector<nn::Param*> params;
        net_[0].collect_params(params);
        auto step = [&](const std::vector<std::size_t>& idx) {
            Matrix xw = with_w_col(take_rows(x_train, idx), gather(w_train, idx));
            Matrix dlog;
            const double loss = sq_err_sum(net_[0].forward(xw), gather(tgt.train.y, idx),
                                           1.0 / static_cast<double>(idx.size()), &dlog);
            net_[0].backward(dlog);
            return loss;
        };
        auto validation = [&] {
            Matrix logits = net_[0].forward(with_w_col(x_val, w_val));
            return sq_err_sum(logits, tgt.validation.y, 1.0 / static_cast<double>(x_val.rows()));
        };
        hist_ = fit(tgt.train.n(), cfg_, "s", step, validation, params);
    }

    double arm_pair_factual_mse(const Dataset& ds, const Matrix& x) {
        const auto arm_idx = split_by_arm(ds, all_indices(ds.n()));
        double acc = 0.0;
        for (int a = 0; a < 2; ++a) {
            if (arm_idx[a].empty()) continue;
            Matrix logits = net_[a].forward(take_rows(x, arm_idx[a]));
            acc += sq_err_sum(logits, gather(ds.y, arm_idx[a]), 1.0 / static_cast<double>(ds.n()));
        }
        return acc;
    }

    void train_mu_pair(const SplitDataset& tgt, const Matrix& x_train, const Matrix& x_val,
                       const char* tag, TrainHistory* out_hist) {
        std::vector<nn::Param*> params;
        net_[0].collect_params(params);
        net_[1].collect_params(params);
        auto step = [&](const std::vector<std::size_t>& idx) {
            const auto arm_idx = split_by_arm(tgt.train, idx);
            const double inv = 1.0 / static_cast<double>(idx.size());
            double loss = 0.0;
            for (int a = 0; a < 2; ++a) {
                if (arm_idx[a].empty()) continue;
                Matrix dlog;
                loss += sq_err_sum(net_[a].forward(take_rows(x_train, arm_idx[a])),
                                   gather(tgt.train.y, arm_idx[a]), inv, &dlog);
                net_[a].backward(dlog);
            }
            return loss;
        };
        auto validation = [&] { return arm_pair_factual_mse(tgt.validation, x_val); };
        *out_hist = fit(tgt.train.n(), cfg_, tag, step, validation, params);
    }

    void train_t(const SplitDataset& tgt, const Matrix& x_train, const Matrix& x_val) {
        train_mu_pair(tgt, x_train, x_val, "t", &hist_);
    }

    void train_tarnet(const SplitDataset& tgt, const Matrix& x_train, const Matrix& x_val) {
        std::vector<nn::Param*> params;
        rep_.collect_params(params);
        net_[0].collect_params(params);
        net_[1].collect_params(params);
        auto step = [&](const std::vector<std::size_t>& idx) {
            Matrix phi = rep_.forward(take_rows(x_train, idx));
            std::array<std::vector<std::size_t>, 2> arm_pos;
            for (std::size_t k = 0; k < idx.size(); ++k)
                arm_pos[static_cast<std::size_t>(tgt.train.w[idx[k]])].push_back(k);
            Matrix dphi(phi.rows(), phi.cols());
            const double inv = 1.0 / static_cast<double>(idx.size());
            double loss = 0.0;
            for (int a = 0; a < 2; ++a) {
                if (arm_pos[a].empty()) continue;
                std::vector<double> y_a;
                for (auto k : arm_pos[a]) y_a.push_back(tgt.train.y[idx[k]]);
                Matrix dlog;
                loss += sq_err_sum(net_[a].forward(take_rows(phi, arm_pos[a])), y_a, inv, &dlog);
                scatter_add_rows(dphi, net_[a].backward(dlog), arm_pos[a]);
            }
            rep_.backward(dphi);
            return loss;
        };
        auto validation = [&] {
            Matrix phi = rep_.forward(x_val);
            const auto arm_idx = split_by_arm(tgt.validation, all_indices(tgt.validation.n()));
            double acc = 0.0;
            for (int a = 0; a < 2; ++a) {
                if (arm_idx[a].empty()) continue;
                Matrix logits = net_[a].forward(take_rows(phi, arm_idx[a]));
                acc += sq_err_sum(logits, gather(tgt.validation.y, arm_idx[a]),
                                  1.0 / static_cast<double>(tgt.validation.n()));
            }
            return acc;
        };
        hist_ = fit(tgt.train.n(), cfg_, "tarnet", step, validation, params);
    }

    void train_dr(const SplitDataset& tgt, const Matrix& x_train, const Matrix& x_val) {
        // Stage 1a: potential-outcome regressions.
        TrainHistory mu_hist;
        train_mu_pair(tgt, x_train, x_val, "dr_mu", &mu_hist);

        // Stage 1b: propensity, trained on all rows with a logit head.
        {
            std::vector<nn::Param*> params;
            pi_net_.collect_params(params);
            const auto w_train = as_double(tgt.train.w);
            const auto w_val = as_double(tgt.validation.w);
            auto step = [&](const std::vector<std::size_t>& idx) {
                Matrix dlog;
                const double loss = bce_logits_sum(pi_net_.forward(take_rows(x_train, idx)),
                                                   gather(w_train, idx),
                                                   1.0 / static_cast<double>(idx.size()), &dlog);
                pi_net_.backward(dlog);
                return loss;
            };
            auto validation = [&] {
                return bce_logits_sum(pi_net_.forward(x_val), w_val,
                                      1.0 / static_cast<double>(x_val.rows()));
            };
            fit(tgt.train.n(), cfg_, "dr_pi", step, validation, params);
        }

        // Pseudo-outcomes for target train/validation, then the direct regression.
        auto pseudo = [&](const Dataset& ds, const Matrix& x) {
            Matrix mu0 = net_[0].forward(x);
            Matrix mu1 = net_[1].forward(x);
            Matrix pl = pi_net_.forward(x);
            std::vector<double> out(ds.n());
            for (std::size_t i = 0; i < ds.n(); ++i) {
                const double p = std::clamp(nn::sigmoid(pl(i, 0)), cfg_.propensity_clip,
                                            1.0 - cfg_.propensity_clip);
                out[i] = dr_pseudo_outcome(ds.y[i], ds.w[i], mu0(i, 0), mu1(i, 0), p);
            }
            return out;
        };
        const auto ytil_train = pseudo(tgt.train, x_train);
        const auto ytil_val = pseudo(tgt.validation, x_val);

        std::vector<nn::Param*> params;
        tau_net_.collect_params(params);
        auto step = [&](const std::vector<std::size_t>& idx) {
            Matrix dlog;
            const double loss = sq_err_sum(tau_net_.forward(take_rows(x_train, idx)),
                                           gather(ytil_train, idx),
                                           1.0 / static_cast<double>(idx.size()), &dlog);
            tau_net_.backward(dlog);
            return loss;
        };
        auto validation = [&] {
            return sq_err_sum(tau_net_.forward(x_val), ytil_val, 1.0 / static_cast<double>(x_val.rows()));
        };
        hist_ = fit(tgt.train.n(), cfg_, "dr_tau", step, validation, params);
    }

    LearnerKind kind_ = LearnerKind::t;
    BaselineMode mode_ = BaselineMode::target_only;
    TrainConfig cfg_;
    std::size_t d_shared_ = 0;
    std::size_t d_used_ = 0;
    nn::Mlp net_[2];  // s: [0] only; t/dr: mu0/mu1; tarnet: heads
    nn::Mlp pi_net_, tau_net_, rep_;
    TrainHistory hist_;
};

// ---------------------------------------------------------------------------
// method dispatch used by the benchmark harness

enum class Method { target, shared, htce, htce_no_po_sharing, htce_no_orth_z, htce_no_orth_po };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::target: return "target";
        case Method::shared: return "shared";
        case Method::htce: return "htce";
        case Method::htce_no_po_sharing: return "htce_no_po_sharing";
        case Method::htce_no_orth_z: return "htce_no_orth_z";
        case Method::htce_no_orth_po: return "htce_no_orth_po";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "target") return Method::target;
    if (s == "shared") return Method::shared;
    if (s == "htce") return Method::htce;
    if (s == "htce_no_po_sharing") return Method::htce_no_po_sharing;
    if (s == "htce_no_orth_z") return Method::htce_no_orth_z;
    if (s == "htce_no_orth_po") return Method::htce_no_orth_po;
    throw TrainError("unknown method '" + s + "'");
}

inline std::unique_ptr<CateModel> train_model(LearnerKind kind, Method method,
                                              const SplitDataset& src, const SplitDataset& tgt,
                                              TrainConfig cfg) {
    switch (method) {
        case Method::target:
            return BaselineLearner::train(tgt, kind, BaselineMode::target_only, cfg);
        case Method::shared:
            return BaselineLearner::train(tgt, kind, BaselineMode::shared_features_only, cfg);
        case Method::htce_no_po_sharing: cfg.freeze_shared_stack = true; break;
        case Method::htce_no_orth_z: cfg.disable_orth_z = true; break;
        case Method::htce_no_orth_po: cfg.disable_orth_po = true; break;
        case Method::htce: break;
    }
    switch (kind) {
        case LearnerKind::s: return HtceSLearner::train(src, tgt, cfg);
        case LearnerKind::t: return HtceTLearner::train(src, tgt, cfg);
        case LearnerKind::dr: return HtceDrLearner::train(src, tgt, cfg);
        case LearnerKind::tarnet: return HtceTarnetLearner::train(src, tgt, cfg);
    }
    throw TrainError("unreachable learner kind");
}

/// Untrained counterpart of train_model; used when loading a saved manifest.
inline std::unique_ptr<CateModel> make_model(LearnerKind kind, Method method, const DomainWidths& w,
                                             TrainConfig cfg) {
    switch (method) {
        case Method::target:
            return BaselineLearner::make(w, kind, BaselineMode::target_only, cfg);
        case Method::shared:
            return BaselineLearner::make(w, kind, BaselineMode::shared_features_only, cfg);
        case Method::htce_no_po_sharing: cfg.freeze_shared_stack = true; break;
        case Method::htce_no_orth_z: cfg.disable_orth_z = true; break;
        case Method::htce_no_orth_po: cfg.disable_orth_po = true; break;
        case Method::htce: break;
    }
    switch (kind) {
        case LearnerKind::s: return HtceSLearner::make(w, cfg);
        case LearnerKind::t: return HtceTLearner::make(w, cfg);
        case LearnerKind::dr: return HtceDrLearner::make(w, cfg);
        case LearnerKind::tarnet: return HtceTarnetLearner::make(w, cfg);
    }
    throw TrainError("unreachable learner kind");
}

}  // namespace htce::learners
