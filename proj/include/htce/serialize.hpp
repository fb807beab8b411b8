#pragma once

#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "htce/bench.hpp"
#include "htce/learners.hpp"
#include "htce/sim.hpp"

namespace htce::serialize {

using nlohmann::json;

struct SerializeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFormat = "htce-model-manifest";

// ---------------------------------------------------------------------------
// configs

inline json partition_to_json(const sim::FeaturePartition& p) {
    return {{"d_shared", p.d_shared()},
            {"d_private_source", p.d_private_source()},
            {"d_private_target", p.d_private_target()},
            {"shared_cols", p.shared_cols},
            {"private_source_cols", p.private_source_cols},
            {"private_target_cols", p.private_target_cols}};
}

inline sim::FeaturePartition partition_from_json(const json& j) {
    sim::FeaturePartition p;
    p.shared_cols = j.at("shared_cols").get<std::vector<std::size_t>>();
    p.private_source_cols = j.at("private_source_cols").get<std::vector<std::size_t>>();
    p.private_target_cols = j.at("private_target_cols").get<std::vector<std::size_t>>();
    if (j.contains("d_shared") && j.at("d_shared").get<std::size_t>() != p.d_shared())
        throw SerializeError("partition: d_shared disagrees with shared_cols");
    if (j.contains("d_private_source") &&
        j.at("d_private_source").get<std::size_t>() != p.d_private_source())
        throw SerializeError("partition: d_private_source disagrees with private_source_cols");
    if (j.contains("d_private_target") &&
        j.at("d_private_target").get<std::size_t>() != p.d_private_target())
        throw SerializeError("partition: d_private_target disagrees with private_target_cols");
    return p;
}

inline json sim_config_to_json(const sim::SimConfig& c) {
    return {{"alpha", c.alpha},
            {"beta", c.beta},
            {"kappa_source", c.kappa_source},
            {"kappa_target", c.kappa_target},
            {"n_source", c.n_source},
            {"n_target", c.n_target},
            {"partition", partition_to_json(c.partition)},
            {"noise_std", c.noise_std},
            {"coefficient_param_a", c.coefficient_param_a},
            {"coefficient_param_b", c.coefficient_param_b},
            {"coefficient_law", sim::to_string(c.coefficient_law)},
            {"seed", c.seed}};
}

inline sim::SimConfig sim_config_from_json(const json& j) {
    sim::SimConfig c;
    c.alpha = j.value("alpha", c.alpha);
    c.beta = j.value("beta", c.beta);
    c.kappa_source = j.value("kappa_source", c.kappa_source);
    c.kappa_target = j.value("kappa_target", c.kappa_target);
    c.n_source = j.value("n_source", c.n_source);
    c.n_target = j.value("n_target", c.n_target);
    if (j.contains("partition")) c.partition = partition_from_json(j.at("partition"));
    c.noise_std = j.value("noise_std", c.noise_std);
    c.coefficient_param_a = j.value("coefficient_param_a", c.coefficient_param_a);
    c.coefficient_param_b = j.value("coefficient_param_b", c.coefficient_param_b);
    if (j.contains("coefficient_law")) {
        const auto law = j.at("coefficient_law").get<std::string>();
        if (law == "normal")
            c.coefficient_law = sim::CoefficientLaw::normal;
        else if (law == "uniform")
            c.coefficient_law = sim::CoefficientLaw::uniform;
        else
            throw SerializeError("sim config: unknown coefficient_law '" + law + "'");
    }
    c.seed = j.value("seed", c.seed);
    return c;
}

inline json arch_to_json(const learners::ArchConfig& a) {
    return {{"encoder_units", a.encoder_units},
            {"stack_units", a.stack_units},
            {"stack_layers", a.stack_layers},
            {"tarnet_stack_layers", a.tarnet_stack_layers},
            {"tower_layers", a.tower_layers},
            {"tower_units", a.tower_units},
            {"baseline_layers", a.baseline_layers},
            {"baseline_units", a.baseline_units},
            {"baseline_rep_layers", a.baseline_rep_layers},
            {"baseline_rep_units", a.baseline_rep_units},
            {"baseline_head_layers", a.baseline_head_layers},
            {"baseline_head_units", a.baseline_head_units}};
}

inline learners::ArchConfig arch_from_json(const json& j) {
    learners::ArchConfig a;
    a.encoder_units = j.value("encoder_units", a.encoder_units);
    a.stack_units = j.value("stack_units", a.stack_units);
    a.stack_layers = j.value("stack_layers", a.stack_layers);
    a.tarnet_stack_layers = j.value("tarnet_stack_layers", a.tarnet_stack_layers);
    a.tower_layers = j.value("tower_layers", a.tower_layers);
    a.tower_units = j.value("tower_units", a.tower_units);
    a.baseline_layers = j.value("baseline_layers", a.baseline_layers);
    a.baseline_units = j.value("baseline_units", a.baseline_units);
    a.baseline_rep_layers = j.value("baseline_rep_layers", a.baseline_rep_layers);
    a.baseline_rep_units = j.value("baseline_rep_units", a.baseline_rep_units);
    a.baseline_head_layers = j.value("baseline_head_layers", a.baseline_head_layers);
    a.baseline_head_units = j.value("baseline_head_units", a.baseline_head_units);
    return a;
}

inline json train_config_to_json(const learners::TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"batch_per_domain", c.batch_per_domain},
            {"orth_weight", c.orth_weight},
            {"max_epochs", c.max_epochs},
            {"patience", c.patience},
            {"seed", c.seed},
            {"disable_orth_z", c.disable_orth_z},
            {"disable_orth_po", c.disable_orth_po},
            {"freeze_shared_stack", c.freeze_shared_stack},
            {"dr_oracle_nuisances", c.dr_oracle_nuisances},
            {"propensity_clip", c.propensity_clip},
            {"arch", arch_to_json(c.arch)}};
}

inline learners::TrainConfig train_config_from_json(const json& j) {
    learners::TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_per_domain = j.value("batch_per_domain", c.batch_per_domain);
    c.orth_weight = j.value("orth_weight", c.orth_weight);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.disable_orth_z = j.value("disable_orth_z", c.disable_orth_z);
    c.disable_orth_po = j.value("disable_orth_po", c.disable_orth_po);
    c.freeze_shared_stack = j.value("freeze_shared_stack", c.freeze_shared_stack);
    c.dr_oracle_nuisances = j.value("dr_oracle_nuisances", c.dr_oracle_nuisances);
    c.propensity_clip = j.value("propensity_clip", c.propensity_clip);
    if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"));
    return c;
}

inline json experiment_spec_to_json(const bench::ExperimentSpec& s) {
    json values = json::array();
    for (const auto& v : s.values) {
        switch (s.sweep) {
            case bench::Sweep::alpha_sweep: values.push_back(v.alpha); break;
            case bench::Sweep::ntarget_sweep: values.push_back(v.n_target); break;
            case bench::Sweep::kappa_sweep: values.push_back({v.kappa_source, v.kappa_target}); break;
            default: break;
        }
    }
    json learners_j = json::array();
    for (auto k : s.learners) learners_j.push_back(learners::to_string(k));
    json methods_j = json::array();
    for (auto m : s.methods) methods_j.push_back(learners::to_string(m));
    return {{"sweep", bench::to_string(s.sweep)},
            {"learners", learners_j},
            {"methods", methods_j},
            {"sim", sim_config_to_json(s.sim)},
            {"d_full", s.d_full},
            {"sweep_values", values},
            {"seeds", s.seeds},
            {"train", train_config_to_json(s.train)}};
}

inline bench::ExperimentSpec experiment_spec_from_json(const json& j) {
    bench::ExperimentSpec s;
    s.sweep = bench::sweep_from_string(j.at("sweep").get<std::string>());
    if (j.contains("learners")) {
        s.learners.clear();
        for (const auto& l : j.at("learners"))
            s.learners.push_back(learners::learner_from_string(l.get<std::string>()));
    }
    if (j.contains("methods")) {
        s.methods.clear();
        for (const auto& m : j.at("methods"))
            s.methods.push_back(learners::method_from_string(m.get<std::string>()));
    }
    if (j.contains("sim")) s.sim = sim_config_from_json(j.at("sim"));
    s.d_full = j.value("d_full", s.d_full);
    if (j.contains("sweep_values") && !j.at("sweep_values").empty()) {
        s.values.clear();
        for (const auto& v : j.at("sweep_values")) {
            switch (s.sweep) {
                case bench::Sweep::alpha_sweep:
                    s.values.push_back(bench::SweepValue::of_alpha(v.get<double>()));
                    break;
                case bench::Sweep::ntarget_sweep:
                    s.values.push_back(bench::SweepValue::of_ntarget(v.get<long>()));
                    break;
                case bench::Sweep::kappa_sweep:
                    s.values.push_back(
                        bench::SweepValue::of_kappa(v.at(0).get<double>(), v.at(1).get<double>()));
                    break;
                default:
                    throw SerializeError("experiment spec: sweep_values given for a sweep without values");
            }
        }
    }
    if (j.contains("seeds")) s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("train")) s.train = train_config_from_json(j.at("train"));
    return s;
}

// ---------------------------------------------------------------------------
// model manifests: architecture metadata plus a flat parameter map keyed by
// the hierarchical parameter names (block.arm.layer.subspace.tensor)

inline json model_to_json(learners::CateModel& model, learners::LearnerKind kind,
                          learners::Method method, const learners::DomainWidths& widths,
                          const learners::TrainConfig& cfg) {
    json params = json::object();
    for (nn::Param* p : model.parameters()) {
        if (params.contains(p->name)) throw SerializeError("manifest: duplicate parameter " + p->name);
        params[p->name] = {{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", p->value.raw()}};
    }
    return {{"format", kManifestFormat},
            {"format_version", kManifestVersion},
            {"learner", learners::to_string(kind)},
            {"method", learners::to_string(method)},
            {"widths",
             {{"d_shared", widths.d_shared},
              {"d_source", widths.d_source},
              {"d_target", widths.d_target}}},
            {"train_config", train_config_to_json(cfg)},
            {"params", params}};
}

inline std::unique_ptr<learners::CateModel> model_from_json(const json& j) {
    if (j.value("format", "") != kManifestFormat)
        throw SerializeError("manifest: not a " + std::string(kManifestFormat));
    if (j.value("format_version", -1) != kManifestVersion)
        throw SerializeError("manifest: unsupported format_version");
    const auto kind = learners::learner_from_string(j.at("learner").get<std::string>());
    const auto method = learners::method_from_string(j.at("method").get<std::string>());
    learners::DomainWidths w;
    w.d_shared = j.at("widths").at("d_shared").get<std::size_t>();
    w.d_source = j.at("widths").at("d_source").get<std::size_t>();
    w.d_target = j.at("widths").at("d_target").get<std::size_t>();
    const auto cfg = train_config_from_json(j.at("train_config"));

    auto model = learners::make_model(kind, method, w, cfg);
    const json& params = j.at("params");
    std::size_t matched = 0;
    for (nn::Param* p : model->parameters()) {
        if (!params.contains(p->name)) throw SerializeError("manifest: missing parameter " + p->name);
        const json& pj = params.at(p->name);
        if (pj.at("rows").get<std::size_t>() != p->value.rows() ||
            pj.at("cols").get<std::size_t>() != p->value.cols())
            throw SerializeError("manifest: shape mismatch for " + p->name);
        const auto data = pj.at("data").get<std::vector<double>>();
        if (data.size() != p->value.size()) throw SerializeError("manifest: size mismatch for " + p->name);
        std::copy(data.begin(), data.end(), p->value.data());
        ++matched;
    }
    if (matched != params.size()) throw SerializeError("manifest: unused parameters in file");
    return model;
}

inline void save_model(learners::CateModel& model, learners::LearnerKind kind,
                       learners::Method method, const learners::DomainWidths& widths,
                       const learners::TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw SerializeError("cannot write " + path);
    out << model_to_json(model, kind, method, widths, cfg).dump() << '\n';
}

inline std::unique_ptr<learners::CateModel> load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SerializeError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SerializeError(path + ": " + e.what());
    }
    return model_from_json(j);
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SerializeError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SerializeError(path + ": " + e.what());
    }
    return j;
}

}  // namespace htce::serialize
