#pragma once

#include <sstream>
#include <string>

#include "htce/learners.hpp"

namespace htce {

inline constexpr const char* kVersion = "0.1.0";

/// Human-readable table of the architecture and optimizer constants every
/// learner is built with; printed by `htce-bench describe`.
inline std::string describe_architecture() {
    const learners::TrainConfig c;
    const learners::ArchConfig& a = c.arch;
    std::ostringstream os;
    os << "htce-bench " << kVersion << "\n\n";
    os << "optimizer\n";
    os << "  adam: lr=" << c.learning_rate << " beta1=0.9 beta2=0.999 eps=1e-8\n";
    os << "  batch_per_domain=" << c.batch_per_domain << " (B_R = B_T)\n";
    os << "  orth_weight=" << c.orth_weight << " (applied to both orthogonality losses)\n";
    os << "  max_epochs=" << c.max_epochs << " patience=" << c.patience
       << " (early stopping on target validation)\n";
    os << "  propensity_clip=" << c.propensity_clip << "\n\n";
    os << "feature encoders (phi_s, phi_pR, phi_pT)\n";
    os << "  1 layer, " << a.encoder_units << " units, relu; D_s = D_p = " << a.encoder_units << "\n\n";
    os << "shared/private stacks (selu hidden, scalar last layer)\n";
    os << "  htce-s:      1 block,  " << a.stack_layers << " layers x " << a.stack_units
       << " units/subspace, treatment appended to shared input\n";
    os << "  htce-t:      2 blocks (per arm), per-arm encoders, " << a.stack_layers << " layers x "
       << a.stack_units << " units\n";
    os << "  htce-dr:     stage 1 = htce-t + propensity block (" << a.stack_layers
       << " layers, sigmoid); stage 2 = 1 block, fresh encoders\n";
    os << "  htce-tarnet: shared encoders, per-domain towers (" << a.tower_layers << " layers x "
       << a.tower_units << ", relu), 2 blocks of " << a.tarnet_stack_layers << " layers x "
       << a.stack_units << "\n\n";
    os << "single-domain baselines (relu hidden, linear output)\n";
    os << "  s:      mu(x,w):           " << a.baseline_layers << " layers x " << a.baseline_units << "\n";
    os << "  t:      mu0, mu1:          " << a.baseline_layers << " layers x " << a.baseline_units
       << " each\n";
    os << "  dr:     mu0, mu1, pi, tau: " << a.baseline_layers << " layers x " << a.baseline_units
       << " each\n";
    os << "  tarnet: rep " << a.baseline_rep_layers << " layers x " << a.baseline_rep_units
       << ", heads 2 x (" << a.baseline_head_layers << " layers x " << a.baseline_head_units << ")\n\n";
    os << "simulator defaults\n";
    const sim::SimConfig s;
    os << "  alpha=" << s.alpha << " beta=" << s.beta << " kappa_source=" << s.kappa_source
       << " kappa_target=" << s.kappa_target << "\n";
    os << "  n_source=" << s.n_source << " n_target=" << s.n_target << " noise_std=" << s.noise_std
       << "\n";
    os << "  coefficients ~ " << sim::to_string(s.coefficient_law) << "(" << s.coefficient_param_a
       << ", " << s.coefficient_param_b << ")\n";
    os << "  splits: 56/24/20 train/validation/test\n";
    return os.str();
}

}  // namespace htce
