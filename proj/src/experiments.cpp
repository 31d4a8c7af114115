#include "mtq/experiments.hpp"

#include "mtq/checkpoint.hpp"
#include "mtq/errors.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace mtq::experiments {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string delta_dir_name(double delta) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "delta_%.2f", delta);
  return buf;
}

nlohmann::ordered_json stats_json(const eval::EvalReport& r) {
  return eval::to_json(r, false)["per_metric"];
}

}  // namespace

RunOutputs train_and_evaluate(const Manifest& train_set, const Manifest& test_set,
                              const RunSpec& spec, const std::filesystem::path& dir) {
  train::TrainResult result = train::train(spec.model, train_set, spec.loss, spec.train);
  const auto ckpt = train::write_training_outputs(result, dir);
  eval::EvalReport report = eval::evaluate(result.model, test_set, "test",
                                           ckpt.filename().string() + "@" + file_digest(ckpt));
  write_text(dir / "report.json", eval::to_json(report).dump(2) + "\n");
  return {ckpt, std::move(result), std::move(report)};
}

std::vector<SweepRow> sweep_delta(const Manifest& train_set, const Manifest& test_set,
                                  const RunSpec& base, const std::vector<double>& deltas,
                                  const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<SweepRow> rows;
  for (double delta : deltas) {
    RunSpec spec = base;
    spec.loss.delta = delta;
    spec.loss.kind = train::LossKind::kHuber;
    spec.train.mode = train::Mode::kMpl;
    const RunOutputs run = train_and_evaluate(train_set, test_set, spec, out_dir / delta_dir_name(delta));
    SweepRow row{delta, {}};
    for (std::size_t k = 0; k < 3; ++k) row.srcc[k] = run.report.per_metric[k].srcc;
    rows.push_back(row);
  }
  write_text(out_dir / "sweep.csv", sweep_csv(rows));
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "delta,smos_srcc,nmos_srcc,gmos_srcc\n";
  for (const SweepRow& r : rows) {
    out << r.delta;
    for (const auto& v : r.srcc) {
      out << ',';
      if (v) out << *v;
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json compare_modes(const Manifest& train_set, const Manifest& test_set,
                                     const RunSpec& base, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  RunSpec teacher = base;
  teacher.train.mode = train::Mode::kTeacher;
  teacher.train.init_checkpoint.reset();
  const train::TrainResult teacher_result =
      train::train(teacher.model, train_set, teacher.loss, teacher.train);
  const auto teacher_ckpt = train::write_training_outputs(teacher_result, out_dir / "teacher");
  const std::string teacher_digest = file_digest(teacher_ckpt);

  nlohmann::ordered_json report;
  report["loss"] = train::loss_kind_name(base.loss.kind);
  report["delta"] = base.loss.delta;
  report["seed"] = base.train.seed;
  report["teacher"] = {{"checkpoint", teacher_ckpt.string()}, {"digest", teacher_digest}};
  nlohmann::ordered_json modes, provenance;
  std::array<std::array<std::optional<double>, 3>, 3> srcc{};

  const std::array<train::Mode, 3> order{train::Mode::kScratch, train::Mode::kKt, train::Mode::kMpl};
  for (std::size_t i = 0; i < order.size(); ++i) {
    RunSpec spec = base;
    spec.train.mode = order[i];
    spec.train.init_checkpoint.reset();
    if (order[i] != train::Mode::kScratch) spec.train.init_checkpoint = teacher_ckpt;
    const std::string name(train::mode_name(order[i]));
    const RunOutputs run = train_and_evaluate(train_set, test_set, spec, out_dir / name);
    modes[name] = stats_json(run.report);
    for (std::size_t k = 0; k < 3; ++k) srcc[i][k] = run.report.per_metric[k].srcc;
    nlohmann::ordered_json p;
    p["init_checkpoint"] = spec.train.init_checkpoint ? nlohmann::ordered_json(teacher_ckpt.string())
                                                      : nlohmann::ordered_json(nullptr);
    p["init_digest"] = run.result.init_digest ? nlohmann::ordered_json(*run.result.init_digest)
                                              : nlohmann::ordered_json(nullptr);
    p["from_teacher"] = run.result.init_digest.has_value() && *run.result.init_digest == teacher_digest;
    p["checkpoint_digest"] = file_digest(run.checkpoint);
    provenance[name] = p;
  }
  report["modes"] = modes;
  report["provenance"] = provenance;

  // Recorded, not asserted.
  nlohmann::ordered_json ordering;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& s = srcc[0][k];
    const auto& m = srcc[2][k];
    nlohmann::ordered_json o;
    o["scratch_srcc"] = s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
    o["mpl_srcc"] = m ? nlohmann::ordered_json(*m) : nlohmann::ordered_json(nullptr);
    o["mpl_at_least_scratch"] = s && m ? nlohmann::ordered_json(*m >= *s) : nlohmann::ordered_json(nullptr);
    ordering[std::string(metric_name(kPrimaryMetrics[k]))] = o;
  }
  report["ordering"] = ordering;
  write_text(out_dir / "compare.json", report.dump(2) + "\n");
  return report;
}

}  // namespace mtq::experiments
