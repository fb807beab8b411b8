#pragma once

#include <string>
#include <vector>

#include "htce/matrix.hpp"
#include "htce/nn.hpp"
#include "htce/sim.hpp"

namespace htce::blocks {

using sim::DomainTag;

struct Representation {
    Matrix z_shared;   // batch x D_s
    Matrix z_private;  // batch x D_p

    Matrix concat() const { return hcat(z_shared, z_private); }
};

/// The heterogeneous-feature-space block: a shared encoder over the shared
/// feature block and one private encoder per domain over that domain's full
/// feature vector.
class EncoderTriple {
public:
    EncoderTriple() = default;

    EncoderTriple(const std::string& name, std::size_t shared_in, std::size_t source_in,
                  std::size_t target_in, std::size_t d_s, std::size_t d_p,
                  nn::Activation act = nn::Activation::relu)
        : phi_shared_(name + ".shared", shared_in, d_s, act),
          phi_private_source_(name + ".private_source", source_in, d_p, act),
          phi_private_target_(name + ".private_target", target_in, d_p, act) {}

    void init(Rng& rng) {
        phi_shared_.init(rng);
        phi_private_source_.init(rng);
        phi_private_target_.init(rng);
    }

    /// x_shared is the shared feature block (plus any extra columns the
    /// learner appends, e.g. the treatment flag); x_full is the domain's
    /// complete feature vector.
    Representation encode(const Matrix& x_shared, const Matrix& x_full, DomainTag domain) {
        Representation r;
        r.z_shared = phi_shared_.forward(x_shared);
        r.z_private = private_encoder(domain).forward(x_full);
        return r;
    }

    /// Propagates representation gradients into the two encoders used by the
    /// matching encode() call.
    void backward(const Matrix& dz_shared, const Matrix& dz_private, DomainTag domain) {
        phi_shared_.backward(dz_shared);
        private_encoder(domain).backward(dz_private);
    }

    std::size_t d_s() const { return phi_shared_.out_dim(); }
    std::size_t d_p() const { return phi_private_source_.out_dim(); }
    std::size_t shared_in() const { return phi_shared_.in_dim(); }

    nn::DenseLayer& private_encoder(DomainTag d) {
        return d == DomainTag::source ? phi_private_source_ : phi_private_target_;
    }

    void collect_params(std::vector<nn::Param*>& out) {
        phi_shared_.collect_params(out);
        phi_private_source_.collect_params(out);
        phi_private_target_.collect_params(out);
    }

    void collect_shared_params(std::vector<nn::Param*>& out) { phi_shared_.collect_params(out); }
    void collect_private_params(DomainTag d, std::vector<nn::Param*>& out) {
        private_encoder(d).collect_params(out);
    }

private:
    nn::DenseLayer phi_shared_;
    nn::DenseLayer phi_private_source_;
    nn::DenseLayer phi_private_target_;
};

/// Feature-representation orthogonality: ||zs_R^T zp_R||_F^2 + ||zs_T^T zp_T||_F^2,
/// each domain contributing its own shared and private representation rows.
inline double orth_feature_loss(const Matrix& zeta_s_source, const Matrix& zeta_p_source,
                                const Matrix& zeta_s_target, const Matrix& zeta_p_target) {
    return nn::frobenius_orth(zeta_s_source, zeta_p_source) +
           nn::frobenius_orth(zeta_s_target, zeta_p_target);
}

enum class OutputKind { linear, sigmoid };

/// One treatment arm of the cross-domain potential-outcome block: L layers,
/// each with a shared subspace and a private subspace per domain. Layer 1
/// feeds the input representation to both paths; from layer 2 on the private
/// path consumes [shared output | private output] while the shared path sees
/// only its own output. The last layer is scalar per subspace and the head
/// adds the two before the output function.
class SharedPrivateStack {
public:
    SharedPrivateStack() = default;

    SharedPrivateStack(const std::string& name, std::size_t rep_width, std::size_t layers,
                       std::size_t units, OutputKind psi,
                       nn::Activation hidden = nn::Activation::selu)
        : units_(units), psi_(psi) {
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t out = (l + 1 == layers) ? 1 : units;
            const std::size_t in_s = (l == 0) ? rep_width : units;
            const std::size_t in_p = (l == 0) ? rep_width : 2 * units;
            const nn::Activation act = (l + 1 == layers) ? nn::Activation::linear : hidden;
            shared_.emplace_back(name + ".shared.layer" + std::to_string(l), in_s, out, act);
            private_source_.emplace_back(name + ".private_source.layer" + std::to_string(l), in_p, out, act);
            private_target_.emplace_back(name + ".private_target.layer" + std::to_string(l), in_p, out, act);
        }
    }

    void init(Rng& rng) {
        for (auto& l : shared_) l.init(rng);
        for (auto& l : private_source_) l.init(rng);
        for (auto& l : private_target_) l.init(rng);
    }

    void zero_shared_weights() {
        for (auto& l : shared_) {
            l.weights().value.fill(0.0);
            l.bias().value.fill(0.0);
        }
    }

    std::size_t layers() const { return shared_.size(); }
    std::size_t rep_width() const { return shared_.front().in_dim(); }
    OutputKind output_kind() const { return psi_; }

    /// Pre-output sum h^p_L + h^s_L for the requested domain; caches for
    /// backward. Apply output_activation() on top for the model prediction.
    Matrix forward_logits(const Matrix& rep, DomainTag domain) {
        auto& priv = private_chain(domain);
        Matrix hs_in = rep;
        Matrix hp_in = rep;
        Matrix hs, hp;
        for (std::size_t l = 0; l < layers(); ++l) {
            hs = shared_[l].forward(hs_in);
            hp = priv[l].forward(hp_in);
            if (l + 1 < layers()) {
                hp_in = hcat(hs, hp);
                hs_in = hs;
            }
        }
        Matrix logits = hs;
        add_scaled(logits, hp);
        return logits;
    }

    Matrix output_activation(const Matrix& logits) const {
        if (psi_ == OutputKind::linear) return logits;
        Matrix out = logits;
        for (double& v : out.raw()) v = nn::sigmoid(v);
        return out;
    }

    Matrix forward(const Matrix& rep, DomainTag domain) {
        return output_activation(forward_logits(rep, domain));
    }

    /// dlogits is the gradient with respect to the pre-output sum. Returns the
    /// gradient with respect to the input representation.
    Matrix backward(const Matrix& dlogits, DomainTag domain) {
        auto& priv = private_chain(domain);
        Matrix dhs = dlogits;
        Matrix dhp = dlogits;
        Matrix drep;
        for (std::size_t l = layers(); l-- > 0;) {
            Matrix din_p = priv[l].backward(dhp);
            Matrix din_s = shared_[l].backward(dhs);
            if (l > 0) {
                dhs = slice_cols(din_p, 0, units_);
                add_scaled(dhs, din_s);
                dhp = slice_cols(din_p, units_, units_);
            } else {
                drep = din_p;
                add_scaled(drep, din_s);
            }
        }
        return drep;
    }

    /// Weight-space orthogonality over this arm's layers: for each layer,
    /// the shared weights against the first m^s rows of each private weight
    /// matrix (the rows consuming the shared output).
    double orth_po_loss(bool include_source = true, bool include_target = true) const {
        double acc = 0.0;
        for (std::size_t l = 0; l < layers(); ++l) {
            const Matrix& ws = shared_[l].weights().value;
            const std::size_t ms = ws.rows();
            if (include_source)
                acc += nn::frobenius_orth(ws, sliced_rows(private_source_[l].weights().value, ms));
            if (include_target)
                acc += nn::frobenius_orth(ws, sliced_rows(private_target_[l].weights().value, ms));
        }
        return acc;
    }

    /// Same penalty, accumulating scale * d(loss) into the weight gradients.
    double orth_po_loss_and_grad(double scale, bool include_source, bool include_target) {
        double acc = 0.0;
        for (std::size_t l = 0; l < layers(); ++l) {
            nn::Param& ws = shared_[l].weights();
            const std::size_t ms = ws.value.rows();
            if (include_source) acc += orth_term_grad(ws, private_source_[l].weights(), ms, scale);
            if (include_target) acc += orth_term_grad(ws, private_target_[l].weights(), ms, scale);
        }
        return acc;
    }

    std::vector<nn::DenseLayer>& shared_chain() { return shared_; }
    std::vector<nn::DenseLayer>& private_chain(DomainTag d) {
        return d == DomainTag::source ? private_source_ : private_target_;
    }

    void collect_params(std::vector<nn::Param*>& out) {
        for (auto& l : shared_) l.collect_params(out);
        for (auto& l : private_source_) l.collect_params(out);
        for (auto& l : private_target_) l.collect_params(out);
    }

    void collect_shared_params(std::vector<nn::Param*>& out) {
        for (auto& l : shared_) l.collect_params(out);
    }

    void collect_private_params(DomainTag d, std::vector<nn::Param*>& out) {
        for (auto& l : private_chain(d)) l.collect_params(out);
    }

private:
    static Matrix sliced_rows(const Matrix& m, std::size_t count) {
        Matrix s(count, m.cols());
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = m(i, j);
        return s;
    }

    static double orth_term_grad(nn::Param& ws, nn::Param& wp, std::size_t ms, double scale) {
        const Matrix slice = sliced_rows(wp.value, ms);
        Matrix dslice(ms, slice.cols());
        const double loss = nn::frobenius_orth_grad(ws.value, slice, ws.grad, dslice, scale);
        for (std::size_t i = 0; i < ms; ++i)
            for (std::size_t j = 0; j < dslice.cols(); ++j) wp.grad(i, j) += dslice(i, j);
        return loss;
    }

    std::size_t units_ = 0;
    OutputKind psi_ = OutputKind::linear;
    std::vector<nn::DenseLayer> shared_;
    std::vector<nn::DenseLayer> private_source_;
    std::vector<nn::DenseLayer> private_target_;
};

/// Accumulates the per-domain Gram matrix zs^T zp over arm sub-batches, then
/// hands back the loss and the per-sub-batch representation gradients.
class OrthZTerm {
public:
    void add(const Representation& rep) {
        Matrix g = matmul_tn(rep.z_shared, rep.z_private);
        if (gram_.empty())
            gram_ = std::move(g);
        else
            add_scaled(gram_, g);
    }

    double loss() const { return gram_.empty() ? 0.0 : frobenius_sq(gram_); }

    /// d(loss)/d(zs), d(loss)/d(zp) for one contributing sub-batch, scaled.
    void grad(const Representation& rep, double scale, Matrix& dzs, Matrix& dzp) const {
        add_scaled(dzs, matmul_nt(rep.z_private, gram_), 2.0 * scale);
        add_scaled(dzp, matmul(rep.z_shared, gram_), 2.0 * scale);
    }

private:
    Matrix gram_;
};

}  // namespace htce::blocks
