#include "mtpd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <map>
#include <sstream>

#include "mtpd/checkpoint.hpp"
#include "mtpd/digest.hpp"
#include "mtpd/error.hpp"

namespace mtpd {

using nlohmann::json;

namespace {

void ensure_parent(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    ensure_parent(p);
    write_file(p, text);
}

std::filesystem::path require_artifact(const std::filesystem::path& p, const char* what, const char* producer) {
    if (!std::filesystem::exists(p)) {
        throw DependencyError("missing " + std::string(what) + " '" + p.string() + "'; run `prune-distill " + producer +
                              "` first");
    }
    return p;
}

json per_task_json(const PerTask<double>& v) {
    json j = json::object();
    for (Task t : all_tasks) j[std::string(task_name(t))] = v[task_index(t)];
    return j;
}

PruningPlan load_plan(const PipelineConfig& config) {
    const auto path = require_artifact(config.paths.resolve(config.paths.plan), "pruning plan", "plan");
    try {
        return PruningPlan::from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw ConfigError("plan file '" + path.string() + "' is malformed: " + e.what());
    }
}

struct LoadedTeacher {
    Checkpoint checkpoint;
    std::string sha256;
};

LoadedTeacher load_teacher(const PipelineConfig& config) {
    const auto path = require_artifact(config.paths.resolve(config.paths.teacher), "teacher checkpoint", "train");
    return {load_checkpoint(path), sha256_file(path)};
}

StatsFile load_stats(const PipelineConfig& config, const std::string& teacher_sha) {
    const auto path = require_artifact(config.paths.resolve(config.paths.stats), "statistics file", "collect");
    StatsFile f = parse_stats_file(read_file(path));
    if (f.meta.value("teacher_sha256", std::string()) != teacher_sha) {
        throw DependencyError("statistics in '" + path.string() +
                              "' were collected from a different teacher checkpoint; rerun `prune-distill collect`");
    }
    return f;
}

void check_plan_teacher(const PruningPlan& plan, const std::string& teacher_sha) {
    if (plan.provenance.value("teacher_sha256", std::string()) != teacher_sha) {
        throw DependencyError("teacher checkpoint hash differs from the one recorded in the pruning plan");
    }
}

PruningPlan seal_with_provenance(PruningPlan plan, const PipelineConfig& config, const std::string& teacher_sha,
                                 const std::string& stats_sha) {
    plan.provenance = {{"teacher_sha256", teacher_sha}, {"stats_sha256", stats_sha}, {"config", config.to_json()}};
    plan.seal();
    return plan;
}

json distill_log_line(const DistillEpochLog& e, const PipelineConfig& config) {
    return {{"epoch", e.epoch},         {"task", per_task_json(e.task)},
            {"kd", e.kd},               {"total", e.total},
            {"beta_effective", e.beta_effective}, {"lr", config.distill.lr},
            {"seed", config.seed}};
}

std::string jsonl(const std::vector<json>& lines) {
    std::string out;
    for (const auto& l : lines) out += l.dump() + "\n";
    return out;
}

const char* metrics_note =
    "metrics are computed on synthetic toy scenes (box MSE, class accuracy, per-pixel accuracy); they are not "
    "comparable to benchmark results on real driving data. latency is single-threaded CPU wall time per image.";

}  // namespace

SeedPlan SeedPlan::from(std::uint64_t seed) {
    // splitmix64 steps keep the streams unrelated for neighbouring seeds.
    auto mix = [](std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    };
    return {mix(seed), mix(seed + 1), mix(seed + 2), mix(seed + 3)};
}

Datasets make_datasets(const PipelineConfig& config) {
    const SeedPlan seeds = SeedPlan::from(config.seed);
    return {generate_dataset(seeds.train_data, config.dataset.n_train, config.model.image_size),
            generate_dataset(seeds.val_data, config.dataset.n_val, config.model.image_size)};
}

std::vector<ChannelStatistics> collect_statistics(const Model& model, std::span<const SyntheticSample> samples,
                                                  std::size_t batch_size, std::size_t calibration_batches) {
    const ModelGraph& graph = model.graph();
    std::vector<std::string> taps;
    std::vector<ChannelStatistics> stats;
    for (const auto& id : graph.prunable_layers()) {
        taps.push_back(graph.feature_point(id));
        stats.emplace_back(id, graph.layer(id).out_channels);
    }
    auto batches = sequential_batches(samples.size(), batch_size);
    if (batches.size() > calibration_batches) batches.resize(calibration_batches);

    Model work = model.clone();
    work.set_requires_grad(true);
    for (const auto& idx : batches) {
        const Batch batch = make_batch(samples, idx);
        const ForwardResult out = work.forward(batch.images, taps);
        const TaskLosses losses = task_losses(out.predictions, batch);
        for (Task t : all_tasks) {
            // backward() resets interior gradients, so each tap sees this task alone.
            losses[t].backward();
            for (std::size_t i = 0; i < taps.size(); ++i) {
                const Tensor& a = out.taps.at(taps[i]);
                Tensor g = Tensor::zeros(a.shape());
                if (a.has_grad()) std::copy(a.grad().begin(), a.grad().end(), g.data().begin());
                accumulate(stats[i], t, a, g);
            }
        }
        work.zero_grad();
    }
    return stats;
}

std::vector<ConflictReport> conflict_reports(std::span<const ChannelStatistics> stats, double eps) {
    std::vector<ConflictReport> out;
    for (const auto& s : stats) out.push_back(conflict_report(s, eps));
    return out;
}

PruningPlan plan_from_statistics(std::span<const ChannelStatistics> stats, std::span<const ConflictReport> conflicts,
                                 const PruningSection& pruning) {
    const auto importance = aggregate_importance(stats, pruning.tau);
    return build_plan(importance, conflicts, pruning.plan);
}

std::vector<std::vector<std::size_t>> projection_channel_maps(const ModelGraph& teacher_graph, const PruningPlan& plan,
                                                              std::span<const DistillPair> pairs) {
    const auto surviving = surviving_channels(teacher_graph, plan);
    std::vector<std::vector<std::size_t>> maps;
    for (const auto& p : pairs) {
        auto it = surviving.find(p.student_tap);
        maps.push_back(p.student_tap == p.teacher_tap && it != surviving.end() ? it->second
                                                                                : std::vector<std::size_t>{});
    }
    return maps;
}

std::vector<DistillEpochLog> distill_student(const Model& teacher, Model& student, const PruningPlan& plan,
                                             std::span<const SyntheticSample> train, const PipelineConfig& config) {
    const DistillConfig dc = config.distill.to_distill_config();
    Distiller distiller(teacher, dc, projection_channel_maps(teacher.graph(), plan, dc.layer_set));
    const SeedPlan seeds = SeedPlan::from(config.seed);
    student.set_requires_grad(true);

    std::vector<DistillEpochLog> log;
    for (std::size_t epoch = 1; epoch <= config.distill.epochs; ++epoch) {
        DistillEpochLog e;
        e.epoch = epoch;
        e.beta_effective = effective_beta(epoch, dc.warmup_epochs, dc.beta);
        for (const auto& idx : epoch_batches(train.size(), config.dataset.batch_size, seeds.shuffle, epoch)) {
            const Batch batch = make_batch(train, idx);
            const DistillStepResult r = distiller.step(student, batch, e.beta_effective);
            const double w = static_cast<double>(batch.size()) / static_cast<double>(train.size());
            for (std::size_t t = 0; t < task_count; ++t) e.task[t] += r.task[t] * w;
            e.kd += r.kd * w;
            e.total += r.total * w;
        }
        log.push_back(e);
    }
    return log;
}

std::vector<EpochLosses> fine_tune(Model& model, std::span<const SyntheticSample> train, const PipelineConfig& config) {
    const TrainOptions opts{config.distill.epochs, config.dataset.batch_size, config.distill.lr,
                            SeedPlan::from(config.seed).shuffle};
    model.set_requires_grad(true);
    std::vector<EpochLosses> out;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) out.push_back(train_epoch(model, train, opts, epoch));
    return out;
}

double median_latency_ms(const Model& model, const SyntheticSample& sample, std::size_t runs) {
    if (runs == 0) return 0.0;
    NoGradGuard no_grad;
    const Batch one = make_batch(std::span<const SyntheticSample>(&sample, 1));
    std::vector<double> times;
    times.reserve(runs);
    for (std::size_t i = 0; i < runs; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const auto out = model.forward(one.images);
        const auto stop = std::chrono::steady_clock::now();
        (void)out;
        times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(runs / 2), times.end());
    return times[runs / 2];
}

json metrics_json(const EvalMetrics& m) {
    return {{"task_loss", per_task_json(m.task_loss)},
            {"total_task_loss", m.total_task_loss},
            {"box_mse", m.box_mse},
            {"class_accuracy", m.class_accuracy},
            {"da_pixel_accuracy", m.da_pixel_accuracy},
            {"lane_pixel_accuracy", m.lane_pixel_accuracy},
            {"parameters", m.parameters}};
}

json report_row(const std::string& name, const EvalMetrics& m, const EvalMetrics& reference, double latency_ms) {
    PerTask<double> dtask{};
    for (std::size_t t = 0; t < task_count; ++t) dtask[t] = m.task_loss[t] - reference.task_loss[t];
    const json delta = {
        {"task_loss", per_task_json(dtask)},
        {"total_task_loss", m.total_task_loss - reference.total_task_loss},
        {"box_mse", m.box_mse - reference.box_mse},
        {"class_accuracy", m.class_accuracy - reference.class_accuracy},
        {"da_pixel_accuracy", m.da_pixel_accuracy - reference.da_pixel_accuracy},
        {"lane_pixel_accuracy", m.lane_pixel_accuracy - reference.lane_pixel_accuracy},
        {"parameters", static_cast<std::int64_t>(m.parameters) - static_cast<std::int64_t>(reference.parameters)}};
    return {{"name", name}, {"metrics", metrics_json(m)}, {"delta_vs_teacher", delta}, {"latency_ms_per_image", latency_ms}};
}

TrainSummary run_train(const PipelineConfig& config) {
    if (config.train.epochs == 0) throw ConfigError("no training performed: train.epochs is 0");
    const Datasets ds = make_datasets(config);
    const SeedPlan seeds = SeedPlan::from(config.seed);
    Model model = Model::initialize(ModelGraph::reference(config.model), seeds.init);
    const TrainOptions opts{config.train.epochs, config.dataset.batch_size, config.train.lr, seeds.shuffle};

    TrainSummary summary;
    summary.initial_val_loss = evaluate(model, ds.val, config.dataset.batch_size).total_task_loss;
    std::vector<json> log{{{"epoch", 0}, {"val_total", summary.initial_val_loss}, {"lr", opts.lr}, {"seed", config.seed}}};

    double best = summary.initial_val_loss;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        const EpochLosses losses = train_epoch(model, ds.train, opts, epoch);
        const EvalMetrics val = evaluate(model, ds.val, config.dataset.batch_size);
        if (!std::isfinite(val.total_task_loss)) throw DivergenceError("validation loss is not finite");
        log.push_back({{"epoch", epoch},
                       {"train_task", per_task_json(losses.task)},
                       {"train_total", losses.total},
                       {"val_task", per_task_json(val.task_loss)},
                       {"val_total", val.total_task_loss},
                       {"lr", opts.lr},
                       {"seed", config.seed}});
        summary.epochs_run = epoch;
        summary.final_val_loss = val.total_task_loss;
        if (val.total_task_loss < best) {
            best = val.total_task_loss;
            since_best = 0;
        } else if (config.train.patience > 0 && ++since_best >= config.train.patience) {
            summary.stopped_on_plateau = true;
            break;
        }
    }

    summary.checkpoint = config.paths.resolve(config.paths.teacher);
    CheckpointMetadata meta;
    meta.step = summary.epochs_run;
    meta.seed = config.seed;
    meta.extra = {{"stage", "train"}, {"config", config.to_json()}, {"final_val_total", summary.final_val_loss}};
    ensure_parent(summary.checkpoint);
    save_checkpoint(summary.checkpoint, model, meta);
    write_text(config.paths.resolve(config.paths.train_log), jsonl(log));
    return summary;
}

CollectSummary run_collect(const PipelineConfig& config) {
    const LoadedTeacher teacher = load_teacher(config);
    const SeedPlan seeds = SeedPlan::from(config.seed);
    const auto train = generate_dataset(seeds.train_data, config.dataset.n_train, config.model.image_size);
    const auto stats = collect_statistics(teacher.checkpoint.model, train, config.dataset.batch_size,
                                          config.pruning.calibration_batches);
    const auto conflicts = conflict_reports(stats, config.pruning.eps);

    CollectSummary summary;
    summary.batches = std::min(config.pruning.calibration_batches,
                               sequential_batches(train.size(), config.dataset.batch_size).size());
    json layers = json::array();
    for (const auto& s : stats) layers.push_back(s.layer_id);
    const json meta = {{"kind", "meta"},
                       {"teacher_sha256", teacher.sha256},
                       {"calibration_batches", summary.batches},
                       {"layers", layers},
                       {"config", config.to_json()}};
    summary.stats = config.paths.resolve(config.paths.stats);
    write_text(summary.stats, format_stats_file(meta, stats, conflicts));
    summary.layers = stats.size();
    summary.importance_records = stats.size() * task_count;
    summary.conflict_records = conflicts.size();
    return summary;
}

PruningPlan run_plan(const PipelineConfig& config) {
    const LoadedTeacher teacher = load_teacher(config);
    const StatsFile stats = load_stats(config, teacher.sha256);
    const std::string stats_sha = sha256_file(config.paths.resolve(config.paths.stats));
    PruningPlan plan = seal_with_provenance(plan_from_statistics(stats.stats, stats.conflicts, config.pruning), config,
                                            teacher.sha256, stats_sha);
    write_text(config.paths.resolve(config.paths.plan), plan.to_json().dump(2) + "\n");
    return plan;
}

PruneSummary run_prune(const PipelineConfig& config) {
    const LoadedTeacher teacher = load_teacher(config);
    const PruningPlan plan = load_plan(config);
    check_plan_teacher(plan, teacher.sha256);

    const Model& original = teacher.checkpoint.model;
    const Model pruned = apply_plan(original, plan);
    PruneSummary s;
    s.parameters_before = original.parameter_count();
    s.parameters_after = pruned.parameter_count();
    s.predicted_parameters = predicted_parameter_count(original.graph(), plan);
    if (s.parameters_after != s.predicted_parameters) {
        throw StructuralError("pruned model has " + std::to_string(s.parameters_after) + " parameters, plan predicts " +
                              std::to_string(s.predicted_parameters));
    }
    s.reduction_percent = 100.0 * static_cast<double>(s.parameters_before - s.parameters_after) /
                          static_cast<double>(s.parameters_before);

    CheckpointMetadata meta;
    meta.step = teacher.checkpoint.metadata.step;
    meta.seed = config.seed;
    meta.plan_hash = plan.plan_hash;
    meta.extra = {{"stage", "prune"},
                  {"config", config.to_json()},
                  {"teacher_sha256", teacher.sha256},
                  {"parameters_before", s.parameters_before},
                  {"parameters_after", s.parameters_after},
                  {"reduction_percent", s.reduction_percent}};
    s.checkpoint = config.paths.resolve(config.paths.pruned);
    ensure_parent(s.checkpoint);
    save_checkpoint(s.checkpoint, pruned, meta);
    return s;
}

DistillSummary run_distill(const PipelineConfig& config) {
    const LoadedTeacher teacher = load_teacher(config);
    const PruningPlan plan = load_plan(config);
    check_plan_teacher(plan, teacher.sha256);
    Checkpoint pruned =
        load_checkpoint(require_artifact(config.paths.resolve(config.paths.pruned), "pruned checkpoint", "prune"));
    if (pruned.metadata.plan_hash != plan.plan_hash) {
        throw DependencyError("pruned checkpoint was produced from a different plan (plan_hash mismatch); rerun "
                              "`prune-distill prune`");
    }

    const SeedPlan seeds = SeedPlan::from(config.seed);
    const auto train = generate_dataset(seeds.train_data, config.dataset.n_train, config.model.image_size);
    DistillSummary s;
    Model student = pruned.model;
    s.epochs = distill_student(teacher.checkpoint.model, student, plan, train, config);

    std::vector<json> log;
    for (const auto& e : s.epochs) log.push_back(distill_log_line(e, config));
    write_text(config.paths.resolve(config.paths.distill_log), jsonl(log));

    CheckpointMetadata meta;
    meta.step = config.distill.epochs;
    meta.seed = config.seed;
    meta.plan_hash = plan.plan_hash;
    meta.extra = {{"stage", "distill"}, {"config", config.to_json()}, {"teacher_sha256", teacher.sha256}};
    s.checkpoint = config.paths.resolve(config.paths.student);
    ensure_parent(s.checkpoint);
    save_checkpoint(s.checkpoint, student, meta);
    return s;
}

json run_eval(const PipelineConfig& config) {
    const LoadedTeacher teacher = load_teacher(config);
    const Datasets ds = make_datasets(config);
    const std::size_t bs = config.dataset.batch_size;
    const EvalMetrics ref = evaluate(teacher.checkpoint.model, ds.val, bs);

    json rows = json::array();
    rows.push_back(
        report_row("teacher", ref, ref, median_latency_ms(teacher.checkpoint.model, ds.val[0], config.eval.latency_runs)));
    const std::pair<const char*, std::string> optional[] = {{"pruned", config.paths.pruned},
                                                            {"student", config.paths.student}};
    for (const auto& [name, file] : optional) {
        const auto path = config.paths.resolve(file);
        if (!std::filesystem::exists(path)) continue;
        const Checkpoint c = load_checkpoint(path);
        rows.push_back(report_row(name, evaluate(c.model, ds.val, bs), ref,
                                  median_latency_ms(c.model, ds.val[0], config.eval.latency_runs)));
    }
    const json report = {{"kind", "eval"},
                         {"note", metrics_note},
                         {"teacher_sha256", teacher.sha256},
                         {"rows", rows},
                         {"config", config.to_json()}};
    write_text(config.paths.resolve(config.paths.report), report.dump(2) + "\n");
    return report;
}

json run_ablation(const PipelineConfig& config) {
    const LoadedTeacher teacher = load_teacher(config);
    const StatsFile stats = load_stats(config, teacher.sha256);
    const std::string stats_sha = sha256_file(config.paths.resolve(config.paths.stats));
    const Datasets ds = make_datasets(config);
    const std::size_t bs = config.dataset.batch_size;
    const std::size_t runs = config.eval.latency_runs;
    const Model& base = teacher.checkpoint.model;
    const std::filesystem::path out_dir = config.paths.resolve(config.paths.ablation_dir);

    PipelineConfig tci_config = config;
    tci_config.pruning.plan.use_conflict_penalty = false;
    PipelineConfig gcp_config = config;
    gcp_config.pruning.plan.use_conflict_penalty = true;
    const PruningPlan tci_plan = seal_with_provenance(
        plan_from_statistics(stats.stats, stats.conflicts, tci_config.pruning), tci_config, teacher.sha256, stats_sha);
    const PruningPlan gcp_plan = seal_with_provenance(
        plan_from_statistics(stats.stats, stats.conflicts, gcp_config.pruning), gcp_config, teacher.sha256, stats_sha);
    write_text(out_dir / "plan_tci.json", tci_plan.to_json().dump(2) + "\n");
    write_text(out_dir / "plan_tci_gcp.json", gcp_plan.to_json().dump(2) + "\n");

    const Model tci_model = apply_plan(base, tci_plan);
    const Model gcp_model = apply_plan(base, gcp_plan);
    Model kd_model = gcp_model.clone();
    const auto log = distill_student(base, kd_model, gcp_plan, ds.train, gcp_config);
    std::vector<json> log_lines;
    for (const auto& e : log) log_lines.push_back(distill_log_line(e, gcp_config));
    write_text(out_dir / "distill_log.jsonl", jsonl(log_lines));
    CheckpointMetadata meta;
    meta.step = config.distill.epochs;
    meta.seed = config.seed;
    meta.plan_hash = gcp_plan.plan_hash;
    meta.extra = {{"stage", "ablation"}, {"config", gcp_config.to_json()}, {"teacher_sha256", teacher.sha256}};
    save_checkpoint(out_dir / "student.ckpt", kd_model, meta);

    const EvalMetrics ref = evaluate(base, ds.val, bs);
    struct Rung {
        const char* name;
        const Model* model;
        bool tci, gcp, kd;
        const PruningPlan* plan;
    };
    const Rung ladder[] = {{"teacher", &base, false, false, false, nullptr},
                           {"+TCI", &tci_model, true, false, false, &tci_plan},
                           {"+TCI+GCP", &gcp_model, true, true, false, &gcp_plan},
                           {"+TCI+GCP+KD", &kd_model, true, true, true, &gcp_plan}};
    json rows = json::array();
    for (const auto& r : ladder) {
        const EvalMetrics m = r.model == &base ? ref : evaluate(*r.model, ds.val, bs);
        json row = report_row(r.name, m, ref, median_latency_ms(*r.model, ds.val[0], runs));
        row["taylor_importance"] = r.tci;
        row["conflict_penalty"] = r.gcp;
        row["distillation"] = r.kd;
        row["plan_hash"] = r.plan ? r.plan->plan_hash : std::string();
        rows.push_back(std::move(row));
    }
    const json report = {{"kind", "ablation"},
                         {"note", metrics_note},
                         {"teacher_sha256", teacher.sha256},
                         {"rows", rows},
                         {"config", config.to_json()}};
    write_text(out_dir / "report.json", report.dump(2) + "\n");
    return report;
}

std::string format_stats_file(const json& meta, std::span<const ChannelStatistics> stats,
                              std::span<const ConflictReport> conflicts) {
    std::string out = meta.dump() + "\n";
    for (const auto& s : stats)
        for (Task t : all_tasks) out += importance_record(s, t).dump() + "\n";
    for (const auto& c : conflicts) out += conflict_record(c).dump() + "\n";
    return out;
}

StatsFile parse_stats_file(const std::string& text) {
    StatsFile f;
    std::map<std::string, std::size_t> index;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ConfigError("stats line " + std::to_string(line_no) + " is not JSON: " + e.what());
        }
        const std::string kind = rec.value("kind", std::string());
        if (kind == "meta") {
            f.meta = rec;
        } else if (kind == "importance") {
            const std::string layer = rec.value("layer", std::string());
            auto [it, inserted] = index.emplace(layer, f.stats.size());
            if (inserted) f.stats.emplace_back();
            merge_importance_record(f.stats[it->second], rec);
        } else if (kind == "conflict") {
            f.conflicts.push_back(parse_conflict_record(rec));
        } else {
            throw ConfigError("stats line " + std::to_string(line_no) + " has unknown kind '" + kind + "'");
        }
    }
    if (f.meta.is_null()) throw ConfigError("stats file has no meta record");
    for (const auto& s : f.stats) {
        if (!s.ready()) throw ConfigError("stats for '" + s.layer_id + "' are missing a task");
    }
    return f;
}

std::string format_plan_table(const PruningPlan& plan) {
    std::ostringstream o;
    o << std::left << std::setw(10) << "layer" << std::right << std::setw(8) << "before" << std::setw(8) << "after"
      << std::setw(10) << "pruned %" << std::setw(8) << "unsafe" << "\n";
    for (const auto& l : plan.layers) {
        const double pct = 100.0 * static_cast<double>(l.pruned_indices.size()) / static_cast<double>(l.original_channels);
        o << std::left << std::setw(10) << l.layer_id << std::right << std::setw(8) << l.original_channels
          << std::setw(8) << l.kept_count << std::setw(10) << std::fixed << std::setprecision(1) << pct
          << std::setw(8) << l.unsafe_count();
        if (l.shortfall) o << "  (safety shortfall: wanted " << l.target_prune << ")";
        o << "\n";
    }
    o << "plan_hash " << plan.plan_hash << "\n";
    return o.str();
}

json strip_latency(json report) {
    if (report.contains("rows")) {
        for (auto& row : report["rows"]) row.erase("latency_ms_per_image");
    }
    return report;
}

}  // namespace mtpd
