// Copyright 2026 The Referee-AV Authors.
// SPDX-License-Identifier: Apache-2.0

#include "referee/synthworld/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <tuple>

#include "referee/numcore/checkpoint.hpp"
#include "referee/numcore/random.hpp"

namespace referee::synthworld {

using nlohmann::json;
using numcore::derive_seed;
using numcore::Rng;

namespace {

constexpr int kManifestVersion = 1;
constexpr char kManifestFile[] = "dataset.jsonl";
constexpr char kTokensFile[] = "dataset.bin";
constexpr char kWorldFile[] = "world.bin";

enum : std::uint64_t {
  kStreamLayout = 101,
  kStreamSplit = 102,
  kStreamReference = 103,
  kStreamContentBase = 1'000'000,
  kStreamRenderBase = 2'000'000,
};

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  return out;
}

// Integer counts summing to `total` with shares proportional to `weights`;
// leftover units go to the largest fractional parts, earliest index first.
std::vector<int> largest_remainder(int total, const std::vector<double>& weights) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> counts(weights.size(), 0);
  std::vector<double> frac(weights.size(), 0.0);
  int used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = wsum > 0 ? total * weights[i] / wsum : 0.0;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    frac[i] = exact - counts[i];
    used += counts[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] + 1e-12; });
  for (std::size_t k = 0; used < total && k < order.size(); ++k, ++used) ++counts[order[k]];
  return counts;
}

template <typename V>
void shuffle(std::vector<V>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[numcore::uniform_index(rng, i)]);
  }
}

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

bool contains(const std::vector<Manipulation>& v, Manipulation m) {
  return std::find(v.begin(), v.end(), m) != v.end();
}

std::string clip_array_name(int id, const char* stream) {
  return "clip." + std::to_string(id) + "." + stream;
}

numcore::NamedArray to_array(const std::string& name, const numcore::Tensor<float>& t) {
  auto d = t.data();
  return {name, t.shape(), std::vector<float>(d.begin(), d.end())};
}

}  // namespace

std::string_view to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "TRAIN";
    case Split::kVal: return "VAL";
    case Split::kTestIn: return "TEST_IN";
    case Split::kTestUnseen: return "TEST_UNSEEN";
  }
  return "UNKNOWN";
}

Split parse_split(std::string_view name) {
  const std::string u = upper(name);
  for (Split s : {Split::kTrain, Split::kVal, Split::kTestIn, Split::kTestUnseen}) {
    if (to_string(s) == u) return s;
  }
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

void DatasetConfig::validate() const {
  world.validate();
  if (n_speakers <= 0 || clips_per_speaker <= 0) {
    throw DatasetError("dataset config: n_speakers and clips_per_speaker must be positive");
  }
  double total = 0;
  for (const auto& [m, w] : mix) {
    if (!(w >= 0)) throw DatasetError("dataset config: negative mix weight for " +
                                      std::string(to_string(m)));
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw DatasetError("dataset config: manipulation mix sums to " + std::to_string(total) +
                       ", expected 1");
  }
  if (mix.count(Manipulation::kReal) == 0 || mix.at(Manipulation::kReal) <= 0) {
    throw DatasetError("dataset config: mix needs a positive REAL fraction for references");
  }
  std::set<int> held(held_out_speakers.begin(), held_out_speakers.end());
  if (held.size() != held_out_speakers.size()) {
    throw DatasetError("dataset config: duplicate held-out speaker");
  }
  for (int s : held_out_speakers) {
    if (s < 0 || s >= n_speakers) {
      throw DatasetError("dataset config: held-out speaker " + std::to_string(s) +
                         " out of range");
    }
  }
  const int seen = n_speakers - static_cast<int>(held.size());
  const bool swaps = std::any_of(mix.begin(), mix.end(), [](const auto& kv) {
    return kv.second > 0 && (kv.first == Manipulation::kVisualSwap ||
                             kv.first == Manipulation::kAudioSwap ||
                             kv.first == Manipulation::kBothSwap);
  });
  if (seen < 1) throw DatasetError("dataset config: every speaker is held out");
  if (swaps && (seen < 2 || held.size() == 1)) {
    throw DatasetError("dataset config: identity swaps need two speakers per group");
  }
  if (window_segments <= 0 || min_segments < window_segments || max_segments < min_segments) {
    throw DatasetError("dataset config: clips must be at least one window (" +
                       std::to_string(window_segments) + " segments) long");
  }
  if (train_fraction <= 0 || val_fraction < 0 || train_fraction + val_fraction >= 1) {
    throw DatasetError("dataset config: split fractions must leave room for TEST_IN");
  }
  if (!(real_sampling_weight > 0 && real_sampling_weight < 1)) {
    throw DatasetError("dataset config: real_sampling_weight must lie in (0, 1)");
  }
}

void to_json(json& j, const WorldConfig& c) {
  j = json{{"d_id", c.d_id},
           {"d_raw", c.d_raw},
           {"t_v", c.t_v},
           {"t_a", c.t_a},
           {"segment_span", c.segment_span},
           {"content_sinusoids", c.content_sinusoids},
           {"content_ratio", c.content_ratio},
           {"identity_scale", c.identity_scale},
           {"noise_sigma", c.noise_sigma},
           {"freq_min", c.freq_min},
           {"freq_max", c.freq_max},
           {"artifact_amplitude", c.artifact_amplitude},
           {"artifact_period", c.artifact_period},
           {"seed", c.seed}};
}

void from_json(const json& j, WorldConfig& c) {
  WorldConfig d;
  c.d_id = j.value("d_id", d.d_id);
  c.d_raw = j.value("d_raw", d.d_raw);
  c.t_v = j.value("t_v", d.t_v);
  c.t_a = j.value("t_a", d.t_a);
  c.segment_span = j.value("segment_span", d.segment_span);
  c.content_sinusoids = j.value("content_sinusoids", d.content_sinusoids);
  c.content_ratio = j.value("content_ratio", d.content_ratio);
  c.identity_scale = j.value("identity_scale", d.identity_scale);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.freq_min = j.value("freq_min", d.freq_min);
  c.freq_max = j.value("freq_max", d.freq_max);
  c.artifact_amplitude = j.value("artifact_amplitude", d.artifact_amplitude);
  c.artifact_period = j.value("artifact_period", d.artifact_period);
  c.seed = j.value("seed", d.seed);
}

void to_json(json& j, const DatasetConfig& c) {
  json mix = json::object();
  for (const auto& [m, w] : c.mix) mix[std::string(to_string(m))] = w;
  json held_m = json::array();
  for (Manipulation m : c.held_out_manipulations) held_m.push_back(std::string(to_string(m)));
  j = json{{"world", c.world},
           {"n_speakers", c.n_speakers},
           {"clips_per_speaker", c.clips_per_speaker},
           {"mix", mix},
           {"held_out_manipulations", held_m},
           {"held_out_speakers", c.held_out_speakers},
           {"min_segments", c.min_segments},
           {"max_segments", c.max_segments},
           {"window_segments", c.window_segments},
           {"train_fraction", c.train_fraction},
           {"val_fraction", c.val_fraction},
           {"real_sampling_weight", c.real_sampling_weight},
           {"seed", c.seed}};
}

void from_json(const json& j, DatasetConfig& c) {
  DatasetConfig d;
  c.world = j.contains("world") ? j.at("world").get<WorldConfig>() : d.world;
  c.n_speakers = j.value("n_speakers", d.n_speakers);
  c.clips_per_speaker = j.value("clips_per_speaker", d.clips_per_speaker);
  if (j.contains("mix")) {
    c.mix.clear();
    for (const auto& [name, w] : j.at("mix").items()) {
      c.mix[parse_manipulation(name)] = w.get<double>();
    }
  } else {
    c.mix = d.mix;
  }
  if (j.contains("held_out_manipulations")) {
    c.held_out_manipulations.clear();
    for (const auto& name : j.at("held_out_manipulations")) {
      c.held_out_manipulations.push_back(parse_manipulation(name.get<std::string>()));
    }
  } else {
    c.held_out_manipulations = d.held_out_manipulations;
  }
  c.held_out_speakers = j.value("held_out_speakers", d.held_out_speakers);
  c.min_segments = j.value("min_segments", d.min_segments);
  c.max_segments = j.value("max_segments", d.max_segments);
  c.window_segments = j.value("window_segments", d.window_segments);
  c.train_fraction = j.value("train_fraction", d.train_fraction);
  c.val_fraction = j.value("val_fraction", d.val_fraction);
  c.real_sampling_weight = j.value("real_sampling_weight", d.real_sampling_weight);
  c.seed = j.value("seed", d.seed);
}

json clip_to_json(const ClipRecord& r) {
  return json{{"type", "clip"},
              {"id", r.id},
              {"target_speaker", r.spec.target_speaker},
              {"speaker_v", r.spec.speaker_v},
              {"speaker_a", r.spec.speaker_a},
              {"content_seed", r.spec.content_seed},
              {"desync_shift", r.spec.desync_shift},
              {"manipulation", std::string(to_string(r.spec.manipulation))},
              {"duration_segments", r.spec.duration_segments},
              {"render_seed", r.render_seed},
              {"split", std::string(to_string(r.split))},
              {"reference_id", r.reference_id},
              {"y_fake", r.y_fake()},
              {"y_id_match", r.y_id_match()}};
}

ClipRecord clip_from_json(const json& j) {
  ClipRecord r;
  r.id = j.at("id").get<int>();
  r.spec.target_speaker = j.at("target_speaker").get<int>();
  r.spec.speaker_v = j.at("speaker_v").get<int>();
  r.spec.speaker_a = j.at("speaker_a").get<int>();
  r.spec.content_seed = j.at("content_seed").get<std::uint64_t>();
  r.spec.desync_shift = j.at("desync_shift").get<int>();
  r.spec.manipulation = parse_manipulation(j.at("manipulation").get<std::string>());
  r.spec.duration_segments = j.at("duration_segments").get<int>();
  r.render_seed = j.at("render_seed").get<std::uint64_t>();
  r.split = parse_split(j.at("split").get<std::string>());
  r.reference_id = j.at("reference_id").get<int>();
  r.spec.validate();
  return r;
}

Dataset Dataset::generate(const DatasetConfig& config) {
  config.validate();
  Dataset ds;
  ds.config_ = config;
  ds.world_ = World::create(config.world, config.n_speakers);

  std::vector<Manipulation> kinds;
  std::vector<double> weights;
  for (Manipulation m : kAllManipulations) {
    auto it = config.mix.find(m);
    kinds.push_back(m);
    weights.push_back(it == config.mix.end() ? 0.0 : it->second);
  }
  const std::vector<int> counts = largest_remainder(config.clips_per_speaker, weights);

  std::vector<int> seen, held;
  for (int s = 0; s < config.n_speakers; ++s) {
    (contains(config.held_out_speakers, s) ? held : seen).push_back(s);
  }

  Rng layout(derive_seed(config.seed, kStreamLayout));
  const int span = config.max_segments - config.min_segments + 1;
  for (int s = 0; s < config.n_speakers; ++s) {
    const std::vector<int>& group = contains(config.held_out_speakers, s) ? held : seen;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      for (int c = 0; c < counts[k]; ++c) {
        ClipRecord r;
        r.id = static_cast<int>(ds.clips_.size());
        r.spec.target_speaker = s;
        r.spec.speaker_v = s;
        r.spec.speaker_a = s;
        r.spec.manipulation = kinds[k];
        r.spec.duration_segments =
            config.min_segments + static_cast<int>(numcore::uniform_index(layout, span));
        r.spec.content_seed = derive_seed(config.seed, kStreamContentBase + r.id);
        r.render_seed = derive_seed(config.seed, kStreamRenderBase + r.id);
        if (kinds[k] == Manipulation::kVisualSwap || kinds[k] == Manipulation::kAudioSwap ||
            kinds[k] == Manipulation::kBothSwap) {
          int donor = s;
          while (donor == s) donor = group[numcore::uniform_index(layout, group.size())];
          if (kinds[k] != Manipulation::kAudioSwap) r.spec.speaker_v = donor;
          if (kinds[k] != Manipulation::kVisualSwap) r.spec.speaker_a = donor;
        }
        if (kinds[k] == Manipulation::kDesync) {
          const int mag = 1 + static_cast<int>(numcore::uniform_index(layout, 2));
          r.spec.desync_shift = numcore::uniform_index(layout, 2) == 0 ? -mag : mag;
        }
        r.spec.validate();
        ds.clips_.push_back(r);
      }
    }
  }

  // Splits: stratified per (speaker, manipulation) over seen speakers and
  // seen manipulations; everything else is TEST_UNSEEN.
  Rng split_rng(derive_seed(config.seed, kStreamSplit));
  const std::vector<double> fractions = {
      config.train_fraction, config.val_fraction,
      1.0 - config.train_fraction - config.val_fraction};
  const Split order[] = {Split::kTrain, Split::kVal, Split::kTestIn};
  for (int s = 0; s < config.n_speakers; ++s) {
    for (Manipulation m : kinds) {
      std::vector<int> ids;
      for (const auto& r : ds.clips_) {
        if (r.spec.target_speaker == s && r.spec.manipulation == m) ids.push_back(r.id);
      }
      if (ids.empty()) continue;
      if (contains(config.held_out_speakers, s) || contains(config.held_out_manipulations, m)) {
        for (int id : ids) ds.clips_[static_cast<std::size_t>(id)].split = Split::kTestUnseen;
        continue;
      }
      shuffle(ids, split_rng);
      const auto per = largest_remainder(static_cast<int>(ids.size()), fractions);
      std::size_t pos = 0;
      for (std::size_t g = 0; g < per.size(); ++g) {
        for (int c = 0; c < per[g]; ++c) {
          ds.clips_[static_cast<std::size_t>(ids[pos++])].split = order[g];
        }
      }
    }
  }

  // Evaluation references come from REAL recordings outside TRAIN so the
  // train and test reference pools never overlap.
  Rng ref_rng(derive_seed(config.seed, kStreamReference));
  for (int s = 0; s < config.n_speakers; ++s) {
    std::vector<int> train_reals, eval_reals;
    bool has_eval = false;
    bool has_train = false;
    for (const auto& r : ds.clips_) {
      if (r.spec.target_speaker != s) continue;
      const bool real = r.spec.manipulation == Manipulation::kReal;
      if (r.split == Split::kTrain) {
        has_train = true;
        if (real) train_reals.push_back(r.id);
      } else {
        has_eval = true;
        if (real) eval_reals.push_back(r.id);
      }
    }
    if (has_train && train_reals.size() < 2) {
      throw DatasetError("speaker " + std::to_string(s) + " has " +
                         std::to_string(train_reals.size()) +
                         " TRAIN real clips; reference sampling needs at least 2");
    }
    if (has_eval && eval_reals.size() < 2) {
      throw DatasetError("speaker " + std::to_string(s) + " has " +
                         std::to_string(eval_reals.size()) +
                         " held-out real clips; evaluation references need at least 2");
    }
    for (auto& r : ds.clips_) {
      if (r.spec.target_speaker != s || r.split == Split::kTrain) continue;
      int ref = r.id;
      while (ref == r.id) ref = eval_reals[numcore::uniform_index(ref_rng, eval_reals.size())];
      r.reference_id = ref;
    }
  }

  ds.tokens_.reserve(ds.clips_.size());
  for (const auto& r : ds.clips_) ds.tokens_.push_back(ds.world_.render_clip(r.spec, r.render_seed));
  ds.index();
  return ds;
}

void Dataset::index() {
  train_reals_.clear();
  for (const auto& r : clips_) {
    if (r.split == Split::kTrain && r.spec.manipulation == Manipulation::kReal) {
      train_reals_[r.spec.target_speaker].push_back(r.id);
    }
  }
}

const ClipRecord& Dataset::clip(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= clips_.size()) {
    throw std::out_of_range("unknown clip id " + std::to_string(id));
  }
  return clips_[static_cast<std::size_t>(id)];
}

const ClipTokens& Dataset::tokens(int id) const {
  clip(id);
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Dataset::split_ids(Split split) const {
  std::vector<int> ids;
  for (const auto& r : clips_) {
    if (r.split == split) ids.push_back(r.id);
  }
  return ids;
}

const std::vector<int>& Dataset::train_reals(int speaker) const {
  static const std::vector<int> kEmpty;
  auto it = train_reals_.find(speaker);
  return it == train_reals_.end() ? kEmpty : it->second;
}

ClipTokens Dataset::window(int id, int segment_offset, int n_seg) const {
  const ClipRecord& r = clip(id);
  if (segment_offset < 0 || n_seg <= 0 || segment_offset + n_seg > r.spec.duration_segments) {
    throw std::out_of_range("window [" + std::to_string(segment_offset) + ", " +
                            std::to_string(segment_offset + n_seg) + ") outside clip " +
                            std::to_string(id) + " of " +
                            std::to_string(r.spec.duration_segments) + " segments");
  }
  const ClipTokens& full = tokens(id);
  auto slice = [&](const numcore::Tensor<float>& t, int per_seg) {
    const std::size_t d = t.shape()[1];
    const std::size_t begin = static_cast<std::size_t>(segment_offset * per_seg) * d;
    const std::size_t count = static_cast<std::size_t>(n_seg * per_seg) * d;
    auto src = t.data();
    return numcore::Tensor<float>::from(
        {static_cast<std::size_t>(n_seg * per_seg), d},
        std::vector<float>(src.begin() + static_cast<std::ptrdiff_t>(begin),
                           src.begin() + static_cast<std::ptrdiff_t>(begin + count)));
  };
  return {slice(full.visual, config_.world.t_v), slice(full.audio, config_.world.t_a)};
}

void Dataset::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  world_.save(dir / kWorldFile);

  std::vector<numcore::NamedArray> arrays;
  arrays.reserve(2 * clips_.size());
  for (const auto& r : clips_) {
    const ClipTokens& t = tokens_[static_cast<std::size_t>(r.id)];
    arrays.push_back(to_array(clip_array_name(r.id, "visual"), t.visual));
    arrays.push_back(to_array(clip_array_name(r.id, "audio"), t.audio));
  }
  numcore::write_container(dir / kTokensFile, arrays);

  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + (dir / kManifestFile).string());
  const double rw = config_.real_sampling_weight;
  json header{{"type", "header"},
              {"version", kManifestVersion},
              {"config", config_},
              {"sampling", {{"policy", "class_balanced"},
                            {"real_weight", rw},
                            {"fake_weight", 1.0 - rw}}},
              {"tokens_file", kTokensFile},
              {"world_file", kWorldFile},
              {"n_clips", clips_.size()}};
  out << header.dump() << '\n';
  for (const auto& r : clips_) out << clip_to_json(r).dump() << '\n';
  if (!out) throw DatasetError("write failed for " + (dir / kManifestFile).string());
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / kManifestFile);
  if (!in) throw DatasetError("cannot open " + (dir / kManifestFile).string());
  Dataset ds;
  std::string line;
  bool have_header = false;
  std::size_t n_clips = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DatasetError("malformed manifest line: " + std::string(e.what()));
    }
    if (j.value("type", "") == "header") {
      if (j.at("version").get<int>() != kManifestVersion) {
        throw DatasetError("unsupported manifest version");
      }
      ds.config_ = j.at("config").get<DatasetConfig>();
      n_clips = j.at("n_clips").get<std::size_t>();
      have_header = true;
    } else {
      ClipRecord r = clip_from_json(j);
      if (r.id != static_cast<int>(ds.clips_.size())) {
        throw DatasetError("manifest clip ids must be dense and ascending");
      }
      ds.clips_.push_back(r);
    }
  }
  if (!have_header) throw DatasetError("manifest lacks a header line");
  if (ds.clips_.size() != n_clips) throw DatasetError("manifest clip count mismatch");
  ds.config_.validate();
  ds.world_ = World::load(dir / kWorldFile, ds.config_.world);

  std::map<std::string, numcore::NamedArray> by_name;
  for (auto& a : numcore::read_container(dir / kTokensFile)) by_name[a.name] = std::move(a);
  const auto& wc = ds.config_.world;
  for (const auto& r : ds.clips_) {
    ClipTokens t;
    for (auto [stream, per_seg, dst] :
         {std::tuple{"visual", wc.t_v, &t.visual}, std::tuple{"audio", wc.t_a, &t.audio}}) {
      auto it = by_name.find(clip_array_name(r.id, stream));
      const numcore::Shape expect{static_cast<std::size_t>(r.spec.duration_segments * per_seg),
                                  static_cast<std::size_t>(wc.d_raw)};
      if (it == by_name.end() || it->second.shape != expect) {
        throw DatasetError("token container lacks a valid " + clip_array_name(r.id, stream));
      }
      *dst = numcore::Tensor<float>::from(expect, std::move(it->second.values));
    }
    ds.tokens_.push_back(std::move(t));
  }
  ds.index();
  return ds;
}

}  // namespace referee::synthworld
