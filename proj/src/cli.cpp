#include "quads/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>

#include "quads/error.hpp"
#include "quads/quantizer.hpp"

namespace quads::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_num(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("malformed number \"" + s + "\" in CSV");
  return v;
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(line);
  while (std::getline(is, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << text;
}

std::string init_name(bool pretrained) { return pretrained ? "pretrained" : "random"; }

io::ModelMeta meta_for(const RunConfig& cfg, const EncoderConfig& enc, const std::vector<std::string>& vocab) {
  io::ModelMeta meta;
  meta.encoder = enc;
  meta.n_classes = vocab.size();
  meta.vocab = vocab;
  meta.mel = cfg.mel;
  meta.input_frames = cfg.input_frames();
  return meta;
}

void ensure_tree(const RunConfig& cfg, const fs::path& dir) {
  const fs::path root = cfg.resolved_root();
  ensure_dir(root);
  // Directories below the root are created on demand.
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

ModelGraph load_teacher(const RunConfig& cfg) {
  const fs::path path = cfg.resolved_teacher_path();
  if (!fs::exists(path)) throw Error("teacher checkpoint " + path.string() + " not found; run train-teacher first");
  io::LoadedModel loaded = io::load_checkpoint(path, Role::teacher);
  if (loaded.model.base.config().latent_dim != cfg.student.latent_dim)
    throw Error("teacher checkpoint latent size does not match model.latent_dim");
  return std::move(loaded.model.base);
}

const std::string kReportHeader =
    "strategy,init,seed,bits,params,size_mb,size_mb_serialized,gmacs,codebook_entries,energy,accuracy,macro_f1";

std::string report_line(const ReportRow& r) {
  const auto& e = r.efficiency;
  std::ostringstream os;
  os << r.strategy << ',' << r.init << ',' << r.seed << ',' << e.bit_length << ',' << e.param_count << ','
     << num(e.size_mb_nominal) << ',' << num(e.size_mb_serialized) << ',' << num(e.gmacs) << ','
     << e.codebook_entries << ',' << (e.energy_proxy ? num(*e.energy_proxy) : "") << ',' << num(r.accuracy) << ','
     << num(r.macro_f1);
  return os.str();
}

ReportRow parse_report_line(const std::string& line) {
  const auto f = csv_fields(line);
  if (f.size() != 12) throw Error("malformed report row: " + line);
  ReportRow r;
  r.strategy = f[0];
  r.init = f[1];
  r.seed = static_cast<std::uint64_t>(parse_num(f[2]));
  r.efficiency.bit_length = static_cast<int>(parse_num(f[3]));
  r.efficiency.param_count = static_cast<std::size_t>(parse_num(f[4]));
  r.efficiency.size_mb_nominal = parse_num(f[5]);
  r.efficiency.size_mb_serialized = parse_num(f[6]);
  r.efficiency.gmacs = parse_num(f[7]);
  r.efficiency.codebook_entries = static_cast<std::size_t>(parse_num(f[8]));
  if (!f[9].empty()) r.efficiency.energy_proxy = parse_num(f[9]);
  r.accuracy = parse_num(f[10]);
  r.macro_f1 = parse_num(f[11]);
  return r;
}

std::vector<ReportRow> read_report(const fs::path& path) {
  std::vector<ReportRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw Error(path.string() + ": unexpected report header");
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_report_line(line));
  return rows;
}

void append_report(const fs::path& path, const ReportRow& row) {
  const bool fresh = !fs::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) throw Error("cannot write " + path.string());
  if (fresh) os << kReportHeader << '\n';
  os << report_line(row) << '\n';
}

void write_report_svg(const fs::path& csv, const fs::path& svg) {
  std::vector<ScatterPoint> pts;
  for (const auto& r : read_report(csv))
    pts.push_back({r.efficiency.size_mb_nominal, r.macro_f1,
                   r.strategy + " b" + std::to_string(r.efficiency.bit_length) + " " + r.init});
  write_text(svg, scatter_svg(pts, "model size (MB)", "macro-F1"));
}

ReportRow make_row(Strategy s, bool pretrained, std::uint64_t seed, const QuantizedModel& model,
                   const RunConfig& cfg, const std::vector<io::Example>& test, std::size_t n_classes) {
  ReportRow row;
  row.strategy = std::string(strategy_name(s));
  row.init = init_name(pretrained);
  row.seed = seed;
  row.efficiency = efficiency_of(model, cfg.input_frames(), cfg.energy_table);
  const EvalResult ev = evaluate(model.base, test, n_classes);
  row.accuracy = ev.accuracy;
  row.macro_f1 = ev.f1;
  return row;
}

QuantizedModel as_fp32(ModelGraph student) {
  QuantizedModel q;
  q.base = std::move(student);
  q.bit_length = 32;
  return q;
}

InitMode init_for(const RunConfig& cfg, const Dataset& ds, std::ostream& out) {
  if (!cfg.pretrained_init) return InitMode::random();
  const fs::path path = pretrained_path(cfg);
  if (!fs::exists(path)) {
    out << "pretrained student " << path.string() << " missing; pretraining now\n";
    cmd_pretrain_student(cfg, false, out);
  }
  (void)ds;
  io::LoadedModel loaded = io::load_checkpoint(path);
  if (!(loaded.model.base.config() == cfg.student))
    throw Error("pretrained checkpoint " + path.string() + " does not match the student config");
  return InitMode::pretrained(std::move(loaded.model.base));
}

}  // namespace

void ensure_dir(const fs::path& dir) {
  if (fs::is_directory(dir)) return;
  if (fs::exists(dir)) throw Error("output path " + dir.string() + " exists and is not a directory");
  const fs::path parent = fs::absolute(dir).parent_path();
  if (!fs::is_directory(parent))
    throw Error("parent directory " + parent.string() + " of output " + dir.string() + " does not exist");
  std::error_code ec;
  fs::create_directory(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

Dataset load_dataset(const RunConfig& cfg) {
  const fs::path dir = cfg.resolved_corpus_dir();
  if (!fs::exists(dir / "manifest.csv"))
    throw Error("corpus " + dir.string() + " not found; run synth-data first");
  const io::Manifest all = io::read_manifest(dir / "manifest.csv");
  Dataset ds;
  ds.vocab = all.vocab();
  ds.data.n_classes = ds.vocab.size();
  ds.data.train = io::load_examples(io::read_manifest(dir / "train.csv"), ds.vocab, cfg.mel);
  ds.data.val = io::load_examples(io::read_manifest(dir / "val.csv"), ds.vocab, cfg.mel);
  ds.test = io::load_examples(io::read_manifest(dir / "test.csv"), ds.vocab, cfg.mel);
  return ds;
}

fs::path run_dir(const RunConfig& cfg) {
  const int bits = cfg.strategy == Strategy::distill ? 32 : cfg.bits;
  return cfg.resolved_root() / "runs" /
         (std::string(strategy_name(cfg.strategy)) + "-b" + std::to_string(bits) + "-" +
          init_name(cfg.pretrained_init) + "-seed" + std::to_string(cfg.schedule.seed));
}

fs::path pretrained_path(const RunConfig& cfg) {
  return cfg.resolved_root() / "pretrain" / ("student-seed" + std::to_string(cfg.schedule.seed) + ".qdsm");
}

EfficiencyReport efficiency_of(const QuantizedModel& model, std::size_t input_frames,
                               const std::map<int, double>& energy_table) {
  EfficiencyReport r;
  r.param_count = model.base.param_count();
  r.bit_length = model.codebooks.empty() ? 32 : model.bit_length;
  r.size_mb_nominal = model_size_mb(static_cast<double>(r.param_count), r.bit_length);
  r.size_mb_serialized = static_cast<double>(io::packed_size(model)) / (1024.0 * 1024.0);
  r.gmacs = count_gmacs(model.base, input_frames);
  r.codebook_entries = model.codebook_entry_count();
  if (!energy_table.empty()) r.energy_proxy = energy_proxy(r.gmacs, r.bit_length, energy_table);
  return r;
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "cycle,phase,epoch,l1,l_gt,l_dis,l_centroid,l_quant,total,acc,f1,gamma,alpha\n";
  for (const auto& h : history) {
    const auto& l = h.losses;
    os << h.cycle << ',' << phase_name(h.phase) << ',' << h.epoch << ',' << num(l.l1) << ',' << num(l.l_gt) << ','
       << num(l.l_dis) << ',' << num(l.l_centroid) << ',' << num(l.l_quant) << ',' << num(l.total) << ','
       << num(h.accuracy) << ',' << num(h.f1) << ',' << l.gamma << ',' << num(l.alpha) << '\n';
  }
  write_text(path, os.str());
}

std::vector<EpochRecord> read_history_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv_fields(line);
    if (f.size() != 13) throw Error(path.string() + ": malformed history row");
    EpochRecord r;
    r.cycle = static_cast<int>(parse_num(f[0]));
    if (f[1] == "distill")
      r.phase = Phase::distill;
    else if (f[1] == "quantize")
      r.phase = Phase::quantize;
    else if (f[1] == "final_quantize")
      r.phase = Phase::final_quantize;
    else
      throw Error(path.string() + ": unknown phase " + f[1]);
    r.epoch = static_cast<int>(parse_num(f[2]));
    r.losses.l1 = parse_num(f[3]);
    r.losses.l_gt = parse_num(f[4]);
    r.losses.l_dis = parse_num(f[5]);
    r.losses.l_centroid = parse_num(f[6]);
    r.losses.l_quant = parse_num(f[7]);
    r.losses.total = parse_num(f[8]);
    r.accuracy = parse_num(f[9]);
    r.f1 = parse_num(f[10]);
    r.losses.gamma = static_cast<int>(parse_num(f[11]));
    r.losses.alpha = parse_num(f[12]);
    out.push_back(r);
  }
  return out;
}

std::string scatter_svg(const std::vector<ScatterPoint>& points, const std::string& x_label,
                        const std::string& y_label) {
  constexpr double W = 720, H = 440, L = 70, R = 220, T = 30, B = 60;
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  for (const auto& p : points) x1 = std::max(x1, p.x);
  x1 *= 1.05;
  for (const auto& p : points) y1 = std::max(y1, p.y);
  const auto sx = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto sy = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  const auto esc = [](const std::string& s) {
    std::string o;
    for (char c : s) {
      if (c == '<') o += "&lt;";
      else if (c == '>') o += "&gt;";
      else if (c == '&') o += "&amp;";
      else o += c;
    }
    return o;
  };
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    os << "<text x=\"" << sx(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">" << esc(x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << esc(y_label)
     << "</text>\n";
  for (const auto& p : points) {
    os << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"4\" fill=\"steelblue\"/>\n";
    os << "<text x=\"" << sx(p.x) + 6 << "\" y=\"" << sy(p.y) - 4 << "\">" << esc(p.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

io::CorpusFiles cmd_synth_data(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.validate();
  const fs::path dir = cfg.resolved_corpus_dir();
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw Error("corpus directory " + dir.string() + " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  if (cfg.corpus_dir.empty()) ensure_dir(cfg.resolved_root());
  ensure_dir(dir);
  io::CorpusFiles files = io::generate_synthetic_corpus(cfg.corpus, dir);
  write_text(dir / "resolved.ini", to_ini(cfg));
  out << "wrote " << files.all.rows.size() << " clips (" << files.train.rows.size() << " train, "
      << files.val.rows.size() << " val, " << files.test.rows.size() << " test) to " << dir.string() << '\n';
  return files;
}

fs::path cmd_train_teacher(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.validate();
  const fs::path path = cfg.resolved_teacher_path();
  if (fs::exists(path) && !force)
    throw Error("teacher checkpoint " + path.string() + " already exists; pass --force to retrain");
  const Dataset ds = load_dataset(cfg);
  ensure_tree(cfg, path.parent_path());
  write_text(path.parent_path() / "resolved.ini", to_ini(cfg));

  const ModelGraph init = initialize(cfg.teacher, ds.data.n_classes, InitMode::random(), cfg.teacher_training.seed);
  TrainHooks hooks;
  hooks.progress = &out;
  const SupervisedResult res = train_supervised(init, ds.data, cfg.teacher_training, hooks);
  io::save_checkpoint(res.model, meta_for(cfg, cfg.teacher, ds.vocab), path);
  write_history_csv(path.parent_path() / "history.csv", res.history);
  out << "teacher: best val accuracy " << res.best_val_accuracy << " at epoch " << res.best_epoch << "; saved "
      << path.string() << '\n';
  return path;
}

fs::path cmd_pretrain_student(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.validate();
  const fs::path path = pretrained_path(cfg);
  if (fs::exists(path) && !force)
    throw Error("pretrained student " + path.string() + " already exists; pass --force to retrain");
  const Dataset ds = load_dataset(cfg);
  ensure_tree(cfg, path.parent_path());

  SupervisedOptions opts = cfg.pretraining;
  opts.seed = cfg.schedule.seed;
  opts.batch_size = cfg.schedule.batch_size;
  // Separate stream from the student that MCT initializes with the same seed.
  const ModelGraph init = initialize(cfg.student, ds.data.n_classes, InitMode::random(), cfg.schedule.seed ^ 0x9e3779b9ULL);
  TrainHooks hooks;
  hooks.progress = &out;
  const SupervisedResult res = train_supervised(init, ds.data, opts, hooks);
  io::save_checkpoint(res.model, meta_for(cfg, cfg.student, ds.vocab), path);
  out << "pretrained student: best val accuracy " << res.best_val_accuracy << "; saved " << path.string() << '\n';
  return path;
}

ReportRow cmd_mct(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.validate();
  const fs::path dir = run_dir(cfg);
  if (fs::exists(dir / "model.qdsm") && !force)
    throw Error("run " + dir.string() + " already exists; pass --force to overwrite");
  const Dataset ds = load_dataset(cfg);
  const ModelGraph teacher = load_teacher(cfg);
  ensure_tree(cfg, dir);
  write_text(dir / "resolved.ini", to_ini(cfg));

  const InitMode init = init_for(cfg, ds, out);
  const MctSchedule sched = cfg.resolved_schedule();
  TrainHooks hooks;
  hooks.progress = &out;

  Strategy strategy = cfg.strategy;
  QuantizedModel model;
  std::vector<EpochRecord> history;
  if (strategy == Strategy::distill || cfg.bits == 32) {
    DistillResult d = distill_only(teacher, cfg.student, init, ds.data, sched, hooks);
    model = as_fp32(std::move(d.student));
    history = std::move(d.history);
  } else if (strategy == Strategy::quant_after) {
    TrainResult r = baseline_quantize_after_distill(teacher, cfg.student, init, ds.data, sched, hooks);
    model = std::move(r.model);
    history = std::move(r.history);
  } else {
    TrainResult r = mct_train(teacher, cfg.student, init, ds.data, sched, hooks);
    model = std::move(r.model);
    history = std::move(r.history);
  }

  io::save_packed(model, meta_for(cfg, cfg.student, ds.vocab), dir / "model.qdsm");
  write_history_csv(dir / "history.csv", history);
  const ReportRow row = make_row(strategy, cfg.pretrained_init, cfg.schedule.seed, model, cfg, ds.test, ds.data.n_classes);
  const fs::path report = cfg.resolved_root() / "report.csv";
  append_report(report, row);
  write_report_svg(report, cfg.resolved_root() / "report.svg");
  out << "test accuracy " << row.accuracy << " macro-F1 " << row.macro_f1 << " size " << round2(row.efficiency.size_mb_nominal)
      << " MB (" << row.efficiency.bit_length << "-bit) gmacs " << row.efficiency.gmacs << "; saved "
      << (dir / "model.qdsm").string() << '\n';
  return row;
}

std::vector<ReportRow> cmd_ablate(const RunConfig& cfg, bool force, std::ostream& out) {
  cfg.validate();
  const Dataset ds = load_dataset(cfg);
  const ModelGraph teacher = load_teacher(cfg);
  const fs::path dir = cfg.resolved_root() / "ablation";
  const fs::path csv = dir / "ablation.csv";
  if (force && fs::exists(dir)) fs::remove_all(dir);
  ensure_tree(cfg, dir);
  write_text(dir / "resolved.ini", to_ini(cfg));

  std::vector<ReportRow> rows = read_report(csv);
  using CellKey = std::tuple<std::uint64_t, std::string, std::string, int>;
  const auto key_of = [](const ReportRow& r) { return CellKey{r.seed, r.init, r.strategy, r.efficiency.bit_length}; };
  std::map<CellKey, ReportRow> done;
  for (const auto& r : rows) done.emplace(key_of(r), r);
  if (!done.empty()) out << "resuming ablation with " << done.size() << " finished cells\n";

  TrainHooks hooks;
  hooks.progress = &out;
  const auto record = [&](ReportRow row) {
    append_report(csv, row);
    done.emplace(key_of(row), row);
    out << "cell seed=" << row.seed << ' ' << row.init << ' ' << row.strategy << " b" << row.efficiency.bit_length
        << ": macro-F1 " << row.macro_f1 << '\n';
  };

  for (std::uint64_t seed : cfg.ablation_seeds) {
    for (bool pretrained : {false, true}) {
      RunConfig cell = cfg;
      cell.schedule.seed = seed;
      cell.pretrained_init = pretrained;
      const std::string init = init_name(pretrained);
      const auto has = [&](Strategy s, int b) {
        return done.contains(CellKey{seed, init, std::string(strategy_name(s)), b});
      };
      bool need_distilled = !has(Strategy::distill, 32);
      for (int b : cfg.ablation_bits) need_distilled = need_distilled || !has(Strategy::quant_after, b);
      bool need_mct = false;
      for (int b : cfg.ablation_bits) need_mct = need_mct || !has(Strategy::mct, b);
      if (!need_distilled && !need_mct) continue;

      const InitMode mode = init_for(cell, ds, out);
      if (need_distilled) {
        // The quantize-after-distillation cells reuse the distilled student.
        const fs::path ckpt = dir / ("seed" + std::to_string(seed) + "-" + init + "-distill.qdsm");
        ModelGraph student;
        MctSchedule sched = cell.resolved_schedule();
        if (fs::exists(ckpt)) {
          student = io::load_checkpoint(ckpt).model.base;
        } else {
          DistillResult d = distill_only(teacher, cfg.student, mode, ds.data, sched, hooks);
          student = std::move(d.student);
          io::save_checkpoint(student, meta_for(cfg, cfg.student, ds.vocab), ckpt);
        }
        if (!has(Strategy::distill, 32))
          record(make_row(Strategy::distill, pretrained, seed, as_fp32(student), cfg, ds.test, ds.data.n_classes));
        for (int b : cfg.ablation_bits) {
          if (has(Strategy::quant_after, b)) continue;
          const QuantizedModel q = quantize_model(student, b, sched.policy, sched.seed, sched.kmeans);
          record(make_row(Strategy::quant_after, pretrained, seed, q, cfg, ds.test, ds.data.n_classes));
        }
      }
      for (int b : cfg.ablation_bits) {
        if (has(Strategy::mct, b)) continue;
        MctSchedule sched = cell.resolved_schedule();
        sched.bit_length = b;
        const TrainResult r = mct_train(teacher, cfg.student, mode, ds.data, sched, hooks);
        record(make_row(Strategy::mct, pretrained, seed, r.model, cfg, ds.test, ds.data.n_classes));
      }
    }
  }

  rows = read_report(csv);
  // Median over seeds for every cell of the grid.
  std::map<std::tuple<std::string, std::string, int>, std::vector<const ReportRow*>> groups;
  for (const auto& r : rows) {
    if (std::find(cfg.ablation_seeds.begin(), cfg.ablation_seeds.end(), r.seed) == cfg.ablation_seeds.end()) continue;
    groups[{r.init, r.strategy, r.efficiency.bit_length}].push_back(&r);
  }
  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  std::ostringstream summary;
  summary << "init,strategy,bits,seeds,size_mb,median_accuracy,median_macro_f1\n";
  std::vector<ScatterPoint> pts;
  out << std::left << std::setw(12) << "init" << std::setw(13) << "strategy" << std::setw(6) << "bits" << std::setw(10)
      << "size_mb" << "median_f1\n";
  for (const auto& [k, members] : groups) {
    std::vector<double> acc, f1;
    for (const auto* r : members) {
      acc.push_back(r->accuracy);
      f1.push_back(r->macro_f1);
    }
    const double size = members.front()->efficiency.size_mb_nominal;
    const auto& [init, strategy, bits] = k;
    summary << init << ',' << strategy << ',' << bits << ',' << members.size() << ',' << num(size) << ','
            << num(median(acc)) << ',' << num(median(f1)) << '\n';
    out << std::setw(12) << init << std::setw(13) << strategy << std::setw(6) << bits << std::setw(10) << round2(size)
        << median(f1) << '\n';
    pts.push_back({size, median(f1), strategy + " b" + std::to_string(bits) + " " + init});
  }
  out << std::right;
  write_text(dir / "ablation_summary.csv", summary.str());
  write_text(dir / "ablation.svg", scatter_svg(pts, "model size (MB)", "median macro-F1"));
  return rows;
}

EvalSummary cmd_evaluate(const RunConfig& cfg, const fs::path& model, const fs::path& manifest, std::ostream& out) {
  if (!fs::exists(model)) throw Error("model file " + model.string() + " not found");
  const io::LoadedModel loaded = io::load_packed(model);
  const fs::path mpath = manifest.empty() ? cfg.resolved_corpus_dir() / "test.csv" : manifest;
  const io::Manifest m = io::read_manifest(mpath);
  const auto examples = io::load_examples(m, loaded.meta.vocab, loaded.meta.mel);
  const EvalResult ev = evaluate(loaded.model.base, examples, loaded.meta.n_classes);

  EvalSummary s;
  s.accuracy = ev.accuracy;
  s.macro_f1 = ev.f1;
  s.examples = examples.size();
  const EfficiencyReport eff = efficiency_of(loaded.model, loaded.meta.input_frames, cfg.energy_table);
  s.gmacs = eff.gmacs;
  s.size_mb = eff.size_mb_nominal;

  out << "model,manifest,examples,bits,accuracy,macro_f1,gmacs,size_mb,size_mb_serialized\n"
      << model.string() << ',' << mpath.string() << ',' << s.examples << ',' << eff.bit_length << ',' << num(s.accuracy)
      << ',' << num(s.macro_f1) << ',' << num(s.gmacs) << ',' << num(s.size_mb) << ',' << num(eff.size_mb_serialized)
      << '\n';
  return s;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantized distillation trainer for spoken-intent classifiers"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, init, strategy, run_root, model_path, manifest_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> bits, cycles, epochs;
  std::optional<double> alpha;
  bool force = false;

  app.add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Run seed");
  app.add_option("--bits", bits, "Codebook bit length")->check(CLI::IsMember({4, 8, 16, 32}));
  app.add_option("--cycles", cycles, "Distill/quantize alternations");
  app.add_option("--alpha", alpha, "Feature-vs-label weight of the distillation loss");
  app.add_option("--init", init, "Student initialization")->check(CLI::IsMember({"random", "pretrained"}));
  app.add_option("--strategy", strategy, "Training strategy")->check(CLI::IsMember({"distill", "quant-after", "mct"}));
  app.add_option("--run-dir", run_root, "Output root (default $QUADS_RUN_DIR or ./runs)");
  app.add_option("--set", overrides, "Config override section.key=value")->take_all();
  app.add_flag("--force", force, "Overwrite existing outputs");

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic spoken-command corpus");
  auto* teacher = app.add_subcommand("train-teacher", "Train the teacher with cross-entropy");
  auto* pretrain = app.add_subcommand("pretrain-student", "Train the student with cross-entropy for pretrained init");
  for (auto* sub : {teacher, pretrain}) sub->add_option("--epochs", epochs, "Maximum epochs");
  auto* mct = app.add_subcommand("mct", "Train one student (distill, quant-after or mct) and export it");
  auto* ablate = app.add_subcommand("ablate", "Run the init x strategy x bits grid");
  auto* eval = app.add_subcommand("evaluate", "Evaluate a saved model on a manifest");
  eval->add_option("--model", model_path, "Packed model file")->required();
  eval->add_option("--manifest", manifest_path, "Manifest (default: the corpus test split)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig() : load_config(config_path);
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw Error("--set expects section.key=value, got \"" + o + "\"");
      set_config_value(cfg, o.substr(0, eq), o.substr(eq + 1));
    }
    if (seed) cfg.schedule.seed = *seed;
    if (bits) cfg.bits = *bits;
    if (cycles) cfg.schedule.cycles = *cycles;
    if (alpha) cfg.schedule.alpha = *alpha;
    if (!init.empty()) cfg.pretrained_init = init == "pretrained";
    if (!strategy.empty()) cfg.strategy = parse_strategy(strategy);
    if (!run_root.empty()) cfg.root = run_root;
    if (epochs) {
      if (teacher->parsed()) cfg.teacher_training.max_epochs = *epochs;
      if (pretrain->parsed()) cfg.pretraining.max_epochs = *epochs;
    }

    if (synth->parsed()) cmd_synth_data(cfg, force, out);
    else if (teacher->parsed()) cmd_train_teacher(cfg, force, out);
    else if (pretrain->parsed()) cmd_pretrain_student(cfg, force, out);
    else if (mct->parsed()) cmd_mct(cfg, force, out);
    else if (ablate->parsed()) cmd_ablate(cfg, force, out);
    else if (eval->parsed()) cmd_evaluate(cfg, model_path, manifest_path, out);
    return 0;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace quads::cli
