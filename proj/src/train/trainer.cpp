// Copyright 2026 The learnjpeg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "ljpg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "json.hpp"
#include "ljpg/errors.hpp"
#include "ljpg/metrics.hpp"

namespace ljpg {

using namespace ad;
using nlohmann::json;

// Config ---------------------------------------------------------------------

namespace {

void fail(const std::string& field, const std::string& why) {
  throw InvalidArgument("config: " + field + " " + why);
}

const char* sign_name(RoundingSign s) {
  return s == RoundingSign::kResidualFirst ? "residual_first" : "input_first";
}

RoundingSign parse_sign(const std::string& s) {
  if (s == "residual_first") return RoundingSign::kResidualFirst;
  if (s == "input_first") return RoundingSign::kInputFirst;
  fail("model.rounding_sign", "must be \"residual_first\" or \"input_first\", got \"" + s + "\"");
  return RoundingSign::kResidualFirst;
}

// Reads every key of `obj` through `read`; rejects keys `read` does not know.
template <typename F>
void read_object(const json& obj, const std::string& where, F&& read) {
  if (!obj.is_object()) fail(where.empty() ? "root" : where, "must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    try {
      if (!read(key, value)) fail(path, "is not a known setting");
    } catch (const json::exception&) {
      fail(path, "has the wrong type");
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (patch_size <= 0 || patch_size % 8 != 0) fail("patch_size", "must be a positive multiple of 8");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (patches < 1) fail("patches", "must be >= 1");
  if (steps < 0) fail("steps", "must be >= 0");
  if (!(lr_end > 0.0) || !(lr_start > lr_end) || !std::isfinite(lr_start))
    fail("lr_start/lr_end", "must satisfy lr_start > lr_end > 0");
  if (!(decay_power > 0.0) || !std::isfinite(decay_power)) fail("decay_power", "must be > 0");
  loss.validate();
  if (model.hidden < 1) fail("model.hidden", "must be >= 1");
  if (model.k > 64) fail("model.k", "must be at most 64");
  if (model.steps < 0) fail("model.refine_steps", "must be >= 0");
  if (!(model.scale > 0.0) || !std::isfinite(model.scale)) fail("model.scale", "must be > 0");
}

std::string TrainConfig::to_json() const {
  json j = {
      {"patch_size", patch_size},
      {"batch_size", batch_size},
      {"patches", patches},
      {"steps", steps},
      {"lr_start", lr_start},
      {"lr_end", lr_end},
      {"decay_power", decay_power},
      {"seed", seed},
      {"loss",
       {{"lambda", loss.lambda},
        {"gamma", loss.gamma},
        {"sigma", loss.sigma},
        {"alpha", loss.alpha},
        {"beta", loss.beta}}},
      {"model",
       {{"hidden", model.hidden},
        {"k", model.k},
        {"refine_steps", model.steps},
        {"scale", model.scale},
        {"rounding_sign", sign_name(model.rounding_sign)}}},
  };
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("config: invalid JSON: ") + e.what());
  }
  TrainConfig c;
  read_object(j, "", [&](const std::string& k, const json& v) {
    if (k == "patch_size") c.patch_size = v.get<int>();
    else if (k == "batch_size") c.batch_size = v.get<int>();
    else if (k == "patches") c.patches = v.get<int>();
    else if (k == "steps") c.steps = v.get<int>();
    else if (k == "lr_start") c.lr_start = v.get<double>();
    else if (k == "lr_end") c.lr_end = v.get<double>();
    else if (k == "decay_power") c.decay_power = v.get<double>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else if (k == "loss")
      read_object(v, "loss", [&](const std::string& lk, const json& lv) {
        if (lk == "lambda") c.loss.lambda = lv.get<double>();
        else if (lk == "gamma") c.loss.gamma = lv.get<double>();
        else if (lk == "sigma") c.loss.sigma = lv.get<double>();
        else if (lk == "alpha") c.loss.alpha = lv.get<double>();
        else if (lk == "beta") c.loss.beta = lv.get<double>();
        else return false;
        return true;
      });
    else if (k == "model")
      read_object(v, "model", [&](const std::string& mk, const json& mv) {
        if (mk == "hidden") c.model.hidden = mv.get<std::size_t>();
        else if (mk == "k") c.model.k = mv.get<std::size_t>();
        else if (mk == "refine_steps") c.model.steps = mv.get<int>();
        else if (mk == "scale") c.model.scale = mv.get<double>();
        else if (mk == "rounding_sign") c.model.rounding_sign = parse_sign(mv.get<std::string>());
        else return false;
        return true;
      });
    else return false;
    return true;
  });
  c.validate();
  return c;
}

bool TrainConfig::operator==(const TrainConfig& other) const { return to_json() == other.to_json(); }

// Data -----------------------------------------------------------------------

namespace {

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    throw IoError("data directory '" + dir.string() + "' does not exist or is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec))
    if (entry.is_regular_file()) files.push_back(entry.path());
  if (ec) throw IoError("cannot list '" + dir.string() + "': " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

void emit(const LogFn& log, const std::string& line) {
  if (log) log(line);
}

}  // namespace

std::vector<RgbImage> load_patches(const std::filesystem::path& dir, int patch, int count,
                                   std::uint64_t seed, const LogFn& warn) {
  if (patch <= 0) throw InvalidArgument("load_patches: patch size must be positive");
  if (count < 1) throw InvalidArgument("load_patches: count must be >= 1");
  std::vector<RgbImage> usable;
  for (const auto& path : sorted_files(dir)) {
    try {
      RgbImage img = read_ppm(path);
      if (img.width < patch || img.height < patch) {
        emit(warn, "warning: skipping " + path.string() + ": " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + " is smaller than the " +
                       std::to_string(patch) + "px patch");
        continue;
      }
      usable.push_back(std::move(img));
    } catch (const Error& e) {
      emit(warn, "warning: skipping " + path.string() + ": " + e.what());
    }
  }
  if (usable.empty())
    throw InvalidArgument("no usable images of at least " + std::to_string(patch) + "x" +
                          std::to_string(patch) + " in '" + dir.string() + "'");
  Rng rng(seed);
  std::vector<RgbImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const RgbImage& src = usable[rng.below(usable.size())];
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.width - patch + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(src.height - patch + 1)));
    out.push_back(src.crop(x0, y0, patch, patch));
  }
  return out;
}

// Optimisation -----------------------------------------------------------------

double poly_decay(double lr0, double lr_end, long step, long total, double power) {
  if (step < 0) throw InvalidArgument("poly_decay: step must be >= 0");
  if (!(power > 0.0)) throw InvalidArgument("poly_decay: power must be > 0");
  if (step >= total) return lr_end;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return (lr0 - lr_end) * std::pow(frac, power) + lr_end;
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               double lr, const std::optional<ParamBounds>& bounds) {
  for (const auto& [name, p] : params) {
    for (double g : p.grad_view())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    for (const auto* moments : {&state.m, &state.v}) {
      const auto it = moments->find(name);
      if (it != moments->end() && it->second.size() != p.size())
        throw ShapeError("optimizer state for '" + name + "' has " +
                         std::to_string(it->second.size()) + " entries, parameter has " +
                         std::to_string(p.size()));
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, param] : params) {
    Tensor p = param;
    auto& m = state.m[name];
    auto& v = state.v[name];
    m.resize(p.size(), 0.0);
    v.resize(p.size(), 0.0);
    const auto g = p.grad_view();
    auto values = p.mutable_values();
    const bool clamp = bounds && bounds->applies && bounds->applies(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.eps);
      if (clamp) values[i] = std::clamp(values[i], bounds->lo, bounds->hi);
    }
  }
}

// Checkpoints ------------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "learnjpeg-checkpoint";
constexpr int kCheckpointVersion = 1;
const std::string kMomentPrefix = "adam.m.";
const std::string kVariancePrefix = "adam.v.";

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<NamedTensor> all = ckpt.params;
  for (const auto& [name, m] : ckpt.adam.m) all.push_back({kMomentPrefix + name, {m.size()}, m});
  for (const auto& [name, v] : ckpt.adam.v) all.push_back({kVariancePrefix + name, {v.size()}, v});
  std::vector<std::uint8_t> out = serialize_tensors(all);
  const json meta = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"step", ckpt.step},
      {"adam",
       {{"beta1", ckpt.adam.beta1},
        {"beta2", ckpt.adam.beta2},
        {"eps", ckpt.adam.eps},
        {"step", ckpt.adam.step}}},
      {"config", json::parse(ckpt.config.to_json())},
  };
  const std::string text = meta.dump(2) + "\n";
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  std::size_t consumed = 0;
  std::vector<NamedTensor> all = deserialize_tensors(bytes, &consumed);
  json meta;
  try {
    meta = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(consumed), bytes.end());
  } catch (const json::parse_error&) {
    throw FormatError("", "checkpoint metadata is not valid JSON");
  }
  Checkpoint c;
  try {
    if (meta.at("format").get<std::string>() != kCheckpointFormat)
      throw FormatError("", "not a learnjpeg checkpoint");
    if (meta.at("version").get<int>() != kCheckpointVersion)
      throw FormatError("", "unsupported checkpoint version " + meta.at("version").dump());
    c.step = meta.at("step").get<long>();
    const json& adam = meta.at("adam");
    c.adam.beta1 = adam.at("beta1").get<double>();
    c.adam.beta2 = adam.at("beta2").get<double>();
    c.adam.eps = adam.at("eps").get<double>();
    c.adam.step = adam.at("step").get<long>();
    c.config = TrainConfig::from_json(meta.at("config").dump());
  } catch (const json::exception& e) {
    throw FormatError("", std::string("checkpoint metadata incomplete: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError("", std::string("checkpoint config invalid: ") + e.what());
  }
  for (auto& t : all) {
    if (t.name.rfind(kMomentPrefix, 0) == 0)
      c.adam.m[t.name.substr(kMomentPrefix.size())] = std::move(t.values);
    else if (t.name.rfind(kVariancePrefix, 0) == 0)
      c.adam.v[t.name.substr(kVariancePrefix.size())] = std::move(t.values);
    else
      c.params.push_back(std::move(t));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path));
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  Model m;
  m.config = ckpt.config.model;
  m.stem = VisionStem::zeros();
  m.cell = Smrnn::zeros(m.config.hidden, kBlockArea);
  m.tables.scale = m.config.scale;
  m.tables.luma = Tensor::parameter({8, 8}, std::vector<double>(kBlockArea, m.config.scale));
  m.tables.chroma = Tensor::parameter({8, 8}, std::vector<double>(kBlockArea, m.config.scale));
  for (auto& [name, tensor] : m.named()) {
    const auto it = std::find_if(ckpt.params.begin(), ckpt.params.end(),
                                 [&](const NamedTensor& t) { return t.name == name; });
    if (it == ckpt.params.end()) throw FormatError("", "checkpoint lacks parameter '" + name + "'");
    if (it->shape != tensor.shape())
      throw FormatError("", "checkpoint parameter '" + name + "' has shape " + shape_str(it->shape) +
                                ", expected " + shape_str(tensor.shape()));
    std::copy(it->values.begin(), it->values.end(), tensor.mutable_values().begin());
  }
  return m;
}

// Training -------------------------------------------------------------------

LossBreakdown sample_loss(const Model& model, const PreparedImage& img, const LossConfig& cfg) {
  const PipelineOutput out = forward(model, img);
  const Tensor x = img.target01;
  const Tensor xhat = scalar_mul(out.image, 1.0 / 255.0);
  FeatureFn features;
  if (cfg.gamma > 0.0) features = [&](const Tensor& t) { return stem_forward(t, model.stem); };
  LossBreakdown lb;
  lb.d = distortion_loss(x, xhat, cfg.gamma, features);
  lb.r = rate_loss(model.tables.multipliers(Channel::Y), model.tables.multipliers(Channel::Cb),
                   out.scores.luma, out.scores.chroma, cfg.alpha, cfg.beta);
  lb.al = alignment_loss(x, xhat, cfg.sigma);
  lb.total = total_loss(lb.d, lb.r, lb.al, cfg.lambda);
  return lb;
}

std::string format_step(const StepStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%.9g,%.9g,%.9g,%.9g,%.9g", s.step, s.loss, s.d, s.r, s.al,
                s.lr);
  return buf;
}

namespace {

std::vector<PreparedImage> prepare_pool(const std::vector<RgbImage>& patches) {
  if (patches.empty()) throw InvalidArgument("trainer: empty patch pool");
  std::vector<PreparedImage> pool;
  pool.reserve(patches.size());
  for (const RgbImage& p : patches) {
    if (p.width % 8 != 0 || p.height % 8 != 0)
      throw InvalidArgument("trainer: patch sides must be multiples of 8");
    pool.push_back(prepare_image(p));
  }
  return pool;
}

}  // namespace

Trainer::Trainer(TrainConfig config, std::vector<RgbImage> patches)
    : config_(std::move(config)), pool_(prepare_pool(patches)) {
  config_.validate();
  model_ = Model::init(config_.model, config_.seed);
}

Trainer::Trainer(const Checkpoint& ckpt, std::vector<RgbImage> patches)
    : config_(ckpt.config),
      model_(model_from_checkpoint(ckpt)),
      adam_(ckpt.adam),
      pool_(prepare_pool(patches)) {}

std::vector<std::size_t> Trainer::batch_indices(long step) const {
  const std::size_t n = pool_.size();
  const auto b = static_cast<std::size_t>(config_.batch_size);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (b == n) return idx;
  Rng rng(config_.seed ^ (0xD1B54A32D192ED03ull * static_cast<std::uint64_t>(step + 1)));
  if (b > n) {
    std::vector<std::size_t> out(b);
    for (auto& i : out) i = rng.below(n);
    return out;
  }
  for (std::size_t i = 0; i < b; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(b);
  return idx;
}

StepStats Trainer::step() {
  const long t = adam_.step;
  StepStats s;
  s.lr = poly_decay(config_.lr_start, config_.lr_end, t, config_.steps, config_.decay_power);
  auto params = model_.named();
  for (auto& [name, p] : params) p.zero_grad();
  const auto batch = batch_indices(t);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const LossBreakdown lb = sample_loss(model_, pool_[i], config_.loss);
    backward(scalar_mul(lb.total, inv));
    s.loss += lb.total.item() * inv;
    s.d += lb.d.item() * inv;
    s.r += lb.r.item() * inv;
    s.al += lb.al.item() * inv;
  }
  if (!std::isfinite(s.loss)) throw NumericError("non-finite loss at step " + std::to_string(t + 1));
  adam_step(params, adam_, s.lr,
            ParamBounds{&Model::is_qtable, model_.tables.lower(), model_.tables.upper()});
  s.step = adam_.step;
  return s;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = config_;
  c.step = adam_.step;
  c.adam = adam_;
  for (const auto& [name, t] : model_.named())
    c.params.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
  return c;
}

Checkpoint train(const TrainConfig& config, const std::filesystem::path& data_dir,
                 const std::filesystem::path& out, const LogFn& log) {
  config.validate();
  Trainer trainer(config, load_patches(data_dir, config.patch_size, config.patches, config.seed, log));
  emit(log, "step,loss,d,r,al,lr");
  while (!trainer.done()) emit(log, format_step(trainer.step()));
  Checkpoint ckpt = trainer.checkpoint();
  save_checkpoint(out, ckpt);
  return ckpt;
}

// Evaluation -------------------------------------------------------------------

EvalRow measure(const std::string& id, const RgbImage& original, const RgbImage& decoded,
                double bpp) {
  EvalRow r;
  r.image_id = id;
  r.bpp = bpp;
  r.mse = mse(original, decoded);
  r.psnr_db = psnr_from_mse(r.mse);
  const bool ssim_ok = original.width >= 11 && original.height >= 11;
  r.ssim = ssim_ok ? ssim(original, decoded) : std::nan("");
  const bool ms_ok = original.width >= kMsssimMinSize && original.height >= kMsssimMinSize;
  r.msssim = ms_ok ? msssim(original, decoded) : std::nan("");
  r.msssim_db = msssim_db(r.msssim);
  return r;
}

int matching_quality(const RgbImage& img, double target_bpp) {
  std::map<int, double> cache;
  auto bpp = [&](int q) {
    auto it = cache.find(q);
    if (it != cache.end()) return it->second;
    const double b = bits_per_pixel(encode_baseline(img, quality_tables(q)).size(), img.width, img.height);
    cache.emplace(q, b);
    return b;
  };
  int lo = 1, hi = 100;  // smallest q with bpp(q) >= target, or 100
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (bpp(mid) >= target_bpp) hi = mid;
    else lo = mid + 1;
  }
  if (lo > 1 && std::abs(bpp(lo - 1) - target_bpp) < std::abs(bpp(lo) - target_bpp)) return lo - 1;
  return lo;
}

std::string format_csv_row(const EvalRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.image_id.c_str(), r.bpp,
                r.psnr_db, r.ssim, r.msssim, r.msssim_db, r.mse);
  return buf;
}

std::vector<EvalRow> evaluate(const Model& model, const std::filesystem::path& data_dir,
                              const std::filesystem::path& csv_out,
                              std::optional<int> baseline_quality, const LogFn& warn) {
  if (baseline_quality && (*baseline_quality < 1 || *baseline_quality > 100))
    throw InvalidArgument("baseline quality must be in [1,100]");
  std::vector<EvalRow> rows;
  for (const auto& path : sorted_files(data_dir)) {
    RgbImage img;
    try {
      img = read_ppm(path);
    } catch (const Error& e) {
      emit(warn, "warning: skipping " + path.string() + ": " + e.what());
      continue;
    }
    if (img.width < kMsssimMinSize || img.height < kMsssimMinSize)
      emit(warn, "warning: " + path.string() + " is below " + std::to_string(kMsssimMinSize) +
                     "px; MS-SSIM reported as nan");
    const std::string name = path.stem().string();
    const JfifBitstream neural = encode_neural(model, img);
    const double neural_bpp = bits_per_pixel(neural.size(), img.width, img.height);
    rows.push_back(measure(name + "/neural", img, reconstruct_neural(model, img), neural_bpp));

    const int q = baseline_quality ? *baseline_quality : matching_quality(img, neural_bpp);
    const JfifBitstream base = encode_baseline(img, quality_tables(q));
    rows.push_back(measure(name + "/jpeg_q" + std::to_string(q), img, decode_baseline(base),
                           bits_per_pixel(base.size(), img.width, img.height)));
  }
  if (rows.empty()) throw InvalidArgument("no readable images in '" + data_dir.string() + "'");
  std::string csv = std::string(kEvalCsvHeader) + "\n";
  for (const EvalRow& r : rows) csv += format_csv_row(r) + "\n";
  write_file(csv_out, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  return rows;
}

}  // namespace ljpg
