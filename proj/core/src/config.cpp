#include "mtpd/config.hpp"

#include <cmath>
#include <set>

#include "mtpd/digest.hpp"
#include "mtpd/error.hpp"

namespace mtpd {

namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects whatever was not asked for.
class StrictObject {
public:
    StrictObject(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError("config: '" + where_ + "' must be an object");
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            out = it->template get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config: '" + where_ + "." + key + "' has the wrong type");
        }
    }

    void read(const char* key, std::optional<std::size_t>& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return;
        std::size_t v = 0;
        read(key, v);
        out = v;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw ConfigError("config: unknown key '" + (where_.empty() ? key : where_ + "." + key) + "'");
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError("config: " + message);
}

}  // namespace

std::size_t DistillSection::resolved_warmup_epochs() const {
    if (warmup_epochs) return *warmup_epochs;
    return static_cast<std::size_t>(std::lround(warmup_ratio * static_cast<double>(epochs)));
}

DistillConfig DistillSection::to_distill_config() const {
    DistillConfig c;
    c.layer_set = pairs;
    c.beta = beta;
    c.warmup_epochs = resolved_warmup_epochs();
    c.projection_dim = projection_dim;
    c.teacher_half_precision = teacher_half_precision;
    c.lr = lr;
    return c;
}

std::filesystem::path PathsConfig::resolve(const std::string& name) const {
    std::filesystem::path p(name);
    return p.is_absolute() ? p : std::filesystem::path(dir) / p;
}

json PipelineConfig::to_json() const {
    json pairs = json::array();
    for (const auto& p : distill.pairs) pairs.push_back({p.student_tap, p.teacher_tap});
    const auto& pc = pruning.plan;
    return {
        {"seed", seed},
        {"dataset", {{"n_train", dataset.n_train}, {"n_val", dataset.n_val}, {"batch_size", dataset.batch_size}}},
        {"model",
         {{"image_size", model.image_size},
          {"backbone_channels", model.backbone_channels},
          {"encoder_channels", model.encoder_channels},
          {"head_channels", model.head_channels}}},
        {"train", {{"epochs", train.epochs}, {"lr", train.lr}, {"patience", train.patience}}},
        {"pruning",
         {{"tau", pruning.tau},
          {"eps", pruning.eps},
          {"theta_max", pc.thresholds.max_importance},
          {"theta_avg", pc.thresholds.avg_importance},
          {"theta_pen", pc.thresholds.penalty},
          {"lambda", pc.penalty_weight},
          {"rate", pc.rate},
          {"granularity", pc.granularity},
          {"use_conflict_penalty", pc.use_conflict_penalty},
          {"calibration_batches", pruning.calibration_batches}}},
        {"distill",
         {{"pairs", pairs},
          {"beta", distill.beta},
          {"warmup_ratio", distill.warmup_ratio},
          {"warmup_epochs", optional_json(distill.warmup_epochs)},
          {"epochs", distill.epochs},
          {"lr", distill.lr},
          {"teacher_half_precision", distill.teacher_half_precision},
          {"projection_dim", optional_json(distill.projection_dim)}}},
        {"eval", {{"latency_runs", eval.latency_runs}}},
        {"paths",
         {{"dir", paths.dir},
          {"teacher", paths.teacher},
          {"stats", paths.stats},
          {"plan", paths.plan},
          {"pruned", paths.pruned},
          {"student", paths.student},
          {"train_log", paths.train_log},
          {"distill_log", paths.distill_log},
          {"report", paths.report},
          {"ablation_dir", paths.ablation_dir}}},
    };
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    StrictObject root(j, "");
    root.read("seed", c.seed);
    if (const json* s = root.child("dataset")) {
        StrictObject o(*s, "dataset");
        o.read("n_train", c.dataset.n_train);
        o.read("n_val", c.dataset.n_val);
        o.read("batch_size", c.dataset.batch_size);
        o.finish();
    }
    if (const json* s = root.child("model")) {
        StrictObject o(*s, "model");
        o.read("image_size", c.model.image_size);
        o.read("backbone_channels", c.model.backbone_channels);
        o.read("encoder_channels", c.model.encoder_channels);
        o.read("head_channels", c.model.head_channels);
        o.finish();
    }
    if (const json* s = root.child("train")) {
        StrictObject o(*s, "train");
        o.read("epochs", c.train.epochs);
        o.read("lr", c.train.lr);
        o.read("patience", c.train.patience);
        o.finish();
    }
    if (const json* s = root.child("pruning")) {
        StrictObject o(*s, "pruning");
        auto& pc = c.pruning.plan;
        o.read("tau", c.pruning.tau);
        o.read("eps", c.pruning.eps);
        o.read("theta_max", pc.thresholds.max_importance);
        o.read("theta_avg", pc.thresholds.avg_importance);
        o.read("theta_pen", pc.thresholds.penalty);
        o.read("lambda", pc.penalty_weight);
        o.read("rate", pc.rate);
        o.read("granularity", pc.granularity);
        o.read("use_conflict_penalty", pc.use_conflict_penalty);
        o.read("calibration_batches", c.pruning.calibration_batches);
        o.finish();
    }
    if (const json* s = root.child("distill")) {
        StrictObject o(*s, "distill");
        if (const json* pairs = o.child("pairs")) {
            require(pairs->is_array(), "'distill.pairs' must be an array of [student_tap, teacher_tap]");
            c.distill.pairs.clear();
            for (const auto& p : *pairs) {
                require(p.is_array() && p.size() == 2 && p[0].is_string() && p[1].is_string(),
                        "each 'distill.pairs' entry must be [student_tap, teacher_tap]");
                c.distill.pairs.push_back({p[0].get<std::string>(), p[1].get<std::string>()});
            }
        }
        o.read("beta", c.distill.beta);
        o.read("warmup_ratio", c.distill.warmup_ratio);
        o.read("warmup_epochs", c.distill.warmup_epochs);
        o.read("epochs", c.distill.epochs);
        o.read("lr", c.distill.lr);
        o.read("teacher_half_precision", c.distill.teacher_half_precision);
        o.read("projection_dim", c.distill.projection_dim);
        o.finish();
    }
    if (const json* s = root.child("eval")) {
        StrictObject o(*s, "eval");
        o.read("latency_runs", c.eval.latency_runs);
        o.finish();
    }
    if (const json* s = root.child("paths")) {
        StrictObject o(*s, "paths");
        o.read("dir", c.paths.dir);
        o.read("teacher", c.paths.teacher);
        o.read("stats", c.paths.stats);
        o.read("plan", c.paths.plan);
        o.read("pruned", c.paths.pruned);
        o.read("student", c.paths.student);
        o.read("train_log", c.paths.train_log);
        o.read("distill_log", c.paths.distill_log);
        o.read("report", c.paths.report);
        o.read("ablation_dir", c.paths.ablation_dir);
        o.finish();
    }
    root.finish();
    c.validate();
    return c;
}

void PipelineConfig::validate() const {
    require(dataset.n_train >= 1 && dataset.n_val >= 1, "dataset sizes must be at least 1");
    require(dataset.batch_size >= 1, "dataset.batch_size must be at least 1");
    require(!model.backbone_channels.empty(), "model.backbone_channels must not be empty");
    require(train.lr > 0.0, "train.lr must be positive");
    require(pruning.tau > 0.0, "pruning.tau must be positive");
    require(pruning.eps > 0.0, "pruning.eps must be positive");
    require(pruning.plan.rate > 0.0 && pruning.plan.rate < 1.0, "pruning.rate must lie in (0, 1)");
    require(pruning.plan.penalty_weight >= 0.0, "pruning.lambda must be non-negative");
    require(pruning.plan.granularity >= 1, "pruning.granularity must be at least 1");
    require(pruning.calibration_batches >= 1, "pruning.calibration_batches must be at least 1");
    require(distill.beta >= 0.0, "distill.beta must be non-negative");
    require(distill.warmup_ratio >= 0.0, "distill.warmup_ratio must be non-negative");
    require(distill.lr > 0.0, "distill.lr must be positive");
    require(distill.beta == 0.0 || !distill.pairs.empty(), "distill.pairs must not be empty when beta > 0");
    require(!distill.projection_dim || *distill.projection_dim > 0, "distill.projection_dim must be positive");
}

PipelineConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' does not exist");
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("config: cannot parse '" + path.string() + "': " + e.what());
    }
    return PipelineConfig::from_json(j);
}

}  // namespace mtpd
