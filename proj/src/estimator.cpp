#include "egocast/estimator.hpp"

#include <cmath>

namespace egocast {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

class NullProvider final : public VisualFeatureProvider {
 public:
  explicit NullProvider(int dim) : dim_(dim) {
    if (dim < 1) throw ConfigError("provider dimension must be positive");
  }
  int dim() const override { return dim_; }
  std::vector<double> feature(const PoseSequence&, int) const override {
    return std::vector<double>(static_cast<std::size_t>(dim_), 0.0);
  }

 private:
  int dim_;
};

class InformativeProvider final : public VisualFeatureProvider {
 public:
  InformativeProvider(const SkeletonSpec& skeleton, std::vector<double> projection, int dim,
                      double noise_sigma, std::uint64_t seed)
      : joints_(skeleton.joint_count()),
        dim_(dim),
        sigma_(noise_sigma),
        seed_(seed),
        projection_(std::move(projection)) {
    if (dim < 1) throw ConfigError("provider dimension must be positive");
    if (noise_sigma < 0) throw ConfigError("noise sigma must be non-negative");
    if (projection_.size() != static_cast<std::size_t>(dim) * (3 * joints_))
      throw DimensionError("projection must be dim x 3J = " + std::to_string(dim) + " x " +
                           std::to_string(3 * joints_));
  }

  int dim() const override { return dim_; }

  std::vector<double> feature(const PoseSequence& seq, int t) const override {
    if (t < 0 || t >= seq.size())
      throw ContractError("feature requested outside the sequence at frame " + std::to_string(t));
    const auto& body = seq.frames[t].body;
    if (!body)
      throw ContractError("informative provider needs ground-truth body pose at frame " +
                          std::to_string(t));
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(3 * joints_));
    for (const Vec3& j : body->joints) {
      flat.push_back(j.x);
      flat.push_back(j.y);
      flat.push_back(j.z);
    }
    std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
    for (int r = 0; r < dim_; ++r) {
      double acc = 0;
      const double* row = projection_.data() + static_cast<std::size_t>(r) * flat.size();
      for (std::size_t c = 0; c < flat.size(); ++c) acc += row[c] * flat[c];
      out[r] = acc;
    }
    if (sigma_ > 0) {
      // Noise is a pure function of (seed, frame index, pose content), so
      // repeated calls on the same frame agree.
      Rng noise(derive_seed(seed_, {0xFEEDULL, static_cast<std::uint64_t>(t),
                                    fnv1a(flat.data(), flat.size() * sizeof(double))}));
      for (double& v : out) v += sigma_ * noise.normal();
    }
    return out;
  }

 private:
  int joints_;
  int dim_;
  double sigma_;
  std::uint64_t seed_;
  std::vector<double> projection_;
};

}  // namespace

std::unique_ptr<VisualFeatureProvider> make_null_provider(int dim) {
  return std::make_unique<NullProvider>(dim);
}

std::unique_ptr<VisualFeatureProvider> make_informative_provider(const SkeletonSpec& skeleton,
                                                                 int dim, double noise_sigma,
                                                                 std::uint64_t seed) {
  skeleton.validate();
  const int cols = 3 * skeleton.joint_count();
  Rng rng(derive_seed(seed, {0x9807ULL}));
  std::vector<double> projection(static_cast<std::size_t>(dim) * cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (double& v : projection) v = rng.normal() * scale;
  return std::make_unique<InformativeProvider>(skeleton, std::move(projection), dim, noise_sigma,
                                               seed);
}

std::unique_ptr<VisualFeatureProvider> make_informative_provider_with_projection(
    const SkeletonSpec& skeleton, std::vector<double> projection, int dim, double noise_sigma,
    std::uint64_t seed) {
  skeleton.validate();
  return std::make_unique<InformativeProvider>(skeleton, std::move(projection), dim, noise_sigma,
                                               seed);
}

void EstimatorConfig::validate() const {
  if (window < 1) throw ConfigError("estimator window must be at least 1 frame");
  if (width < 1 || layers < 1 || heads < 1 || visual_dim < 1 || mlp_hidden < 1)
    throw ConfigError("estimator dimensions must be positive");
  if (width % heads != 0)
    throw ConfigError("estimator width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (lr <= 0 || batch < 1 || iterations < 0) throw ConfigError("bad estimator training budget");
}

CurrentFrameModel::CurrentFrameModel(EstimatorConfig cfg, SkeletonSpec skeleton)
    : cfg_(cfg), skeleton_(std::move(skeleton)) {
  cfg_.validate();
  skeleton_.validate();
  Rng rng(derive_seed(cfg_.seed, {0xE511ULL}));
  input_proj_ = Linear(3, cfg_.width, rng);
  {
    std::vector<double> pe(static_cast<std::size_t>(cfg_.window) * cfg_.width);
    for (double& v : pe) v = rng.normal() * 0.02;
    pos_embed_ = Tensor({cfg_.window, cfg_.width}, std::move(pe), /*requires_grad=*/true);
  }
  encoder_ = TransformerEncoder(cfg_.width, cfg_.layers, cfg_.heads, rng);
  fusion_ = Mlp(cfg_.width + cfg_.visual_dim, cfg_.mlp_hidden, 3 * skeleton_.joint_count(), rng);
}

Tensor CurrentFrameModel::encode_window(std::span<const Vec3> positions) const {
  const int len = static_cast<int>(positions.size());
  if (len < 1) throw ContractError("encode_window needs at least one frame");
  if (len > cfg_.window)
    throw ContractError("window of " + std::to_string(len) + " frames exceeds k = " +
                        std::to_string(cfg_.window));
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(len) * 3);
  for (const Vec3& p : positions) {
    flat.push_back(p.x);
    flat.push_back(p.y);
    flat.push_back(p.z);
  }
  Tensor tokens = input_proj_.forward(Tensor({len, 3}, std::move(flat)));
  // Positional embeddings are indexed from the window's end, so the
  // current frame always lands on the same slot during warm-up.
  Tensor pe = narrow(pos_embed_, 0, cfg_.window - len, len);
  Tensor encoded = encoder_.forward(add(tokens, pe));
  return reshape(narrow(encoded, 0, len - 1, 1), {cfg_.width});
}

Tensor CurrentFrameModel::pose_logits(std::span<const Vec3> positions,
                                      std::span<const double> visual) const {
  if (static_cast<int>(visual.size()) != cfg_.visual_dim)
    throw ContractError("visual feature has dimension " + std::to_string(visual.size()) +
                        ", model wants D_v = " + std::to_string(cfg_.visual_dim));
  Tensor e_t = encode_window(positions);
  Tensor e_v({cfg_.visual_dim}, std::vector<double>(visual.begin(), visual.end()));
  return fusion_.forward(concat({e_t, e_v}, 0));
}

BodyPose CurrentFrameModel::estimate(std::span<const Vec3> positions,
                                     std::span<const double> visual) const {
  NoGradGuard no_grad;
  Tensor flat = pose_logits(positions, visual);
  BodyPose pose;
  pose.joints.resize(static_cast<std::size_t>(skeleton_.joint_count()));
  const auto v = flat.values();
  for (int j = 0; j < skeleton_.joint_count(); ++j)
    pose.joints[j] = {v[3 * j], v[3 * j + 1], v[3 * j + 2]};
  return pose;
}

std::vector<NamedParam> CurrentFrameModel::named_parameters() {
  std::vector<NamedParam> params;
  input_proj_.collect("input_proj", params);
  params.push_back({"pos_embed", pos_embed_});
  encoder_.collect("encoder", params);
  fusion_.collect("fusion", params);
  return params;
}

namespace {

std::vector<Vec3> window_positions(std::span<const PoseFrame> window) {
  std::vector<Vec3> positions;
  positions.reserve(window.size());
  for (const PoseFrame& f : window) positions.push_back(f.headset.position);
  return positions;
}

}  // namespace

Tensor encode_proprio(std::span<const PoseFrame> window, const CurrentFrameModel& model) {
  return model.encode_window(window_positions(window));
}

BodyPose estimate_current_pose(const PoseSequence& seq, int t, const VisualFeatureProvider& provider,
                               const CurrentFrameModel& model) {
  const auto window = past_window(seq, t, model.config().window);
  return model.estimate(window_positions(window), provider.feature(seq, t));
}

std::vector<BodyPose> pseudo_groundtruth_track(const PoseSequence& seq,
                                               const VisualFeatureProvider& provider,
                                               const CurrentFrameModel& model) {
  std::vector<BodyPose> track;
  track.reserve(seq.frames.size());
  for (int t = 0; t < seq.size(); ++t)
    track.push_back(estimate_current_pose(seq, t, provider, model));
  return track;
}

TrainStats train_current_module(CurrentFrameModel& model, std::span<const PoseSequence> data,
                                const VisualFeatureProvider& provider) {
  const EstimatorConfig& cfg = model.config();
  if (static_cast<int>(provider.dim()) != cfg.visual_dim)
    throw ConfigError("provider dimension " + std::to_string(provider.dim()) +
                      " does not match D_v = " + std::to_string(cfg.visual_dim));

  std::vector<std::pair<int, int>> pool;  // (sequence, frame)
  for (std::size_t s = 0; s < data.size(); ++s) {
    if (data[s].skeleton != model.skeleton())
      throw ConfigError("sequence skeleton differs from the model skeleton");
    for (int t = 0; t < data[s].size(); ++t)
      if (data[s].frames[t].body) pool.emplace_back(static_cast<int>(s), t);
  }
  if (pool.empty()) throw DataError("dataset has no annotated frames");

  Adam opt(model.named_parameters(), {.lr = cfg.lr});
  Rng rng(derive_seed(cfg.seed, {0x7124ULL}));
  TrainStats stats;
  stats.loss_trace.reserve(static_cast<std::size_t>(cfg.iterations));

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Tape::active().reset();
    opt.zero_grad();

    Tensor total;
    for (int b = 0; b < cfg.batch; ++b) {
      const auto [s, t] = pool[rng.uniform_index(pool.size())];
      const PoseSequence& seq = data[s];
      const auto window = past_window(seq, t, cfg.window);

      Tensor logits = model.pose_logits(window_positions(window), provider.feature(seq, t));
      std::vector<double> target;
      target.reserve(logits.values().size());
      for (const Vec3& j : seq.frames[t].body->joints) {
        target.push_back(j.x);
        target.push_back(j.y);
        target.push_back(j.z);
      }
      Tensor sample_loss = l1_loss(logits, Tensor({static_cast<int>(target.size())}, target));
      total = b == 0 ? sample_loss : add(total, sample_loss);
    }
    Tensor loss = mul_scalar(total, 1.0 / cfg.batch);
    backward(loss);
    opt.step();
    stats.loss_trace.push_back(loss.item());
  }
  Tape::active().reset();
  return stats;
}

}  // namespace egocast
