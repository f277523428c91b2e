#include "quads/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "quads/error.hpp"
#include "quads/model.hpp"
#include "quads/rng.hpp"
#include "quads/wav.hpp"

namespace quads::io {

std::vector<std::string> Manifest::vocab() const {
  std::vector<std::string> v;
  for (const auto& r : rows) v.push_back(r.label);
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::filesystem::path Manifest::resolve(const ManifestRow& row) const {
  const std::filesystem::path p(row.path);
  return p.is_absolute() ? p : base_dir / p;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || line.rfind("path,label", 0) != 0)
    throw Error("manifest " + path.string() + ": expected header row \"path,label\"");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw Error("manifest " + path.string() + ": line " + std::to_string(line_no) + " has no label column");
    m.rows.push_back({line.substr(0, comma), line.substr(comma + 1)});
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << "path,label\n";
  for (const auto& r : rows) out << r.path << ',' << r.label << '\n';
}

std::size_t class_index(const std::vector<std::string>& vocab, const std::string& label) {
  const auto it = std::find(vocab.begin(), vocab.end(), label);
  if (it == vocab.end()) throw Error("label \"" + label + "\" is not in the class vocabulary");
  return static_cast<std::size_t>(it - vocab.begin());
}

void SyntheticCorpusSpec::validate() const {
  if (n_classes < 1) throw Error("corpus spec: n_classes must be >= 1");
  if (samples_per_class < 1) throw Error("corpus spec: samples_per_class must be >= 1");
  if (sample_rate <= 0) throw Error("corpus spec: sample_rate must be positive");
  if (!(duration_s > 0.0)) throw Error("corpus spec: duration must be positive");
  if (!signatures.empty() && signatures.size() != n_classes)
    throw Error("corpus spec: " + std::to_string(signatures.size()) + " signatures for " + std::to_string(n_classes) +
                " classes");
  if (!(tone_fraction > 0.0 && tone_fraction <= 1.0)) throw Error("corpus spec: tone_fraction must lie in (0, 1]");
  if (!(freq_jitter >= 0.0 && freq_jitter < 1.0)) throw Error("corpus spec: freq_jitter must lie in [0, 1)");
  if (std::isnan(snr_db)) throw Error("corpus spec: snr_db is NaN");
  for (std::size_t c = 0; c < n_classes; ++c)
    if (signature(c).base_hz * 2.0 * (1.0 + freq_jitter) >= sample_rate / 2.0)
      throw Error("corpus spec: class " + std::to_string(c) + " harmonic exceeds the Nyquist frequency");
}

ClassSignature default_signature(std::size_t cls) {
  ClassSignature s;
  s.base_hz = 300.0 * std::pow(1.45, static_cast<double>(cls));
  const double sign = cls % 2 == 0 ? 1.0 : -1.0;
  s.chirp_hz_per_s = sign * 0.08 * s.base_hz;
  s.attack_s = 0.02 + 0.03 * static_cast<double>(cls % 3);
  s.release_s = 0.05 + 0.05 * static_cast<double>(cls % 2);
  s.harmonic = 0.2 + 0.1 * static_cast<double>(cls % 4);
  return s;
}

ClassSignature SyntheticCorpusSpec::signature(std::size_t cls) const {
  return signatures.empty() ? default_signature(cls) : signatures.at(cls);
}

std::string class_label(std::size_t cls) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class_%02zu", cls);
  return buf;
}

std::vector<std::int16_t> synthesize_clip(const SyntheticCorpusSpec& spec, std::size_t cls, std::size_t sample) {
  const ClassSignature sig = spec.signature(cls);
  CounterRng rng(spec.seed, (static_cast<std::uint64_t>(cls) << 32) | sample);
  const auto n = static_cast<std::size_t>(std::lround(spec.duration_s * spec.sample_rate));
  const double fs = spec.sample_rate;

  const double f0 = sig.base_hz * (1.0 + rng.uniform(-spec.freq_jitter, spec.freq_jitter));
  const double chirp = sig.chirp_hz_per_s * rng.uniform(0.8, 1.2);
  const double tone_len = spec.tone_fraction * spec.duration_s;
  const double onset = rng.uniform(0.0, spec.duration_s - tone_len);
  const double amp = rng.uniform(0.2, 0.6);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

  std::vector<double> clean(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs - onset;
    if (t < 0.0 || t >= tone_len) continue;
    const double env = std::min({1.0, t / sig.attack_s, (tone_len - t) / sig.release_s});
    const double arg = 2.0 * std::numbers::pi * (f0 * t + 0.5 * chirp * t * t) + phase;
    clean[i] = amp * env * (std::sin(arg) + sig.harmonic * std::sin(2.0 * arg));
  }

  std::vector<double> noisy = clean;
  if (std::isfinite(spec.snr_db)) {
    double power = 0.0;
    for (double v : clean) power += v * v;
    const double rms = std::sqrt(power / static_cast<double>(n));
    const double sigma = rms / std::pow(10.0, spec.snr_db / 20.0);
    for (double& v : noisy) v += sigma * rng.normal();
  }
  std::vector<std::int16_t> pcm(n);
  for (std::size_t i = 0; i < n; ++i) pcm[i] = to_pcm16(noisy[i]);
  return pcm;
}

SplitSizes split_sizes(std::size_t total) {
  SplitSizes s;
  s.train = total * 70 / 100;
  s.val = total * 15 / 100;
  s.test = total - s.train - s.val;
  return s;
}

CorpusFiles generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "wav", ec);
  if (ec) throw Error("cannot create corpus directory " + out_dir.string() + ": " + ec.message());

  CorpusFiles files;
  for (Manifest* m : {&files.all, &files.train, &files.val, &files.test}) m->base_dir = out_dir;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      char name[64];
      std::snprintf(name, sizeof name, "wav/%s_%04zu.wav", class_label(c).c_str(), s);
      write_wav(out_dir / name, synthesize_clip(spec, c, s), spec.sample_rate);
      files.all.rows.push_back({name, class_label(c)});
    }
  }

  std::vector<std::size_t> order(files.all.rows.size());
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(spec.seed, 0x5b117ULL);
  shuffle(order, rng);
  const SplitSizes sizes = split_sizes(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    Manifest& dst = i < sizes.train ? files.train : (i < sizes.train + sizes.val ? files.val : files.test);
    dst.rows.push_back(files.all.rows[order[i]]);
  }
  write_manifest(out_dir / "manifest.csv", files.all.rows);
  write_manifest(out_dir / "train.csv", files.train.rows);
  write_manifest(out_dir / "val.csv", files.val.rows);
  write_manifest(out_dir / "test.csv", files.test.rows);
  return files;
}

std::vector<Example> load_examples(const Manifest& manifest, const std::vector<std::string>& vocab,
                                   const dsp::MelConfig& mel) {
  std::vector<Example> out;
  out.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    const std::size_t label = class_index(vocab, row.label);
    const WavData wav = read_wav(manifest.resolve(row));
    if (wav.sample_rate != mel.sample_rate)
      throw Error(manifest.resolve(row).string() + ": sample rate " + std::to_string(wav.sample_rate) +
                  " does not match the frontend's " + std::to_string(mel.sample_rate));
    out.push_back({model_input(dsp::log_mel(wav.samples, mel)), label});
  }
  return out;
}

}  // namespace quads::io
