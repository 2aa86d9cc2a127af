#include "egocast/forecaster.hpp"

#include <cmath>
#include <iostream>

namespace egocast {

void ForecastConfig::validate() const {
  if (window < 1) throw ConfigError("forecaster window must be at least 1 frame");
  if (horizon < 1) throw ConfigError("forecaster must emit at least one future frame");
  if (width < 1 || layers < 1 || heads < 1 || mlp_hidden < 1)
    throw ConfigError("forecaster dimensions must be positive");
  if (width % heads != 0)
    throw ConfigError("forecaster width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (lr <= 0 || batch < 1 || iterations < 0) throw ConfigError("bad forecaster training budget");
  weights.validate();
}

ForecastModel::ForecastModel(ForecastConfig cfg, SkeletonSpec skeleton)
    : cfg_(cfg), skeleton_(std::move(skeleton)) {
  cfg_.validate();
  skeleton_.validate();
  const int m = token_dim(skeleton_.joint_count());
  Rng rng(derive_seed(cfg_.seed, {0xF0CAULL}));
  input_proj_ = Linear(m, cfg_.width, rng);
  {
    std::vector<double> pe(static_cast<std::size_t>(cfg_.window) * cfg_.width);
    for (double& v : pe) v = rng.normal() * 0.02;
    pos_embed_ = Tensor({cfg_.window, cfg_.width}, std::move(pe), /*requires_grad=*/true);
  }
  encoder_ = TransformerEncoder(cfg_.width, cfg_.layers, cfg_.heads, rng);
  head_ = Mlp(cfg_.width, cfg_.mlp_hidden, cfg_.horizon * m, rng);
}

ForecastTensors ForecastModel::forward(std::span<const ForecastToken> tokens) const {
  const int len = static_cast<int>(tokens.size());
  const int m = token_size();
  if (len < 1) throw ContractError("forecast needs at least one token");
  if (len > cfg_.window)
    throw ContractError("got " + std::to_string(len) + " tokens, window is k = " +
                        std::to_string(cfg_.window));
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(len) * m);
  for (const ForecastToken& token : tokens) {
    if (static_cast<int>(token.size()) != m)
      throw ContractError("token has dimension " + std::to_string(token.size()) +
                          ", model wants m = " + std::to_string(m));
    flat.insert(flat.end(), token.begin(), token.end());
  }

  Tensor projected = input_proj_.forward(Tensor({len, m}, std::move(flat)));
  Tensor pe = narrow(pos_embed_, 0, cfg_.window - len, len);
  Tensor encoded = encoder_.forward(add(projected, pe));
  Tensor fused = mean_pool_tokens(encoded);
  Tensor block = reshape(head_.forward(fused), {cfg_.horizon, m});

  const int j3 = 3 * skeleton_.joint_count();
  ForecastTensors out;
  out.poses = narrow(block, 1, 0, j3);
  out.translations = narrow(block, 1, j3, 3);
  Tensor raw_rot = narrow(block, 1, j3 + 3, 4);
  // Row-normalize the quaternion block; the tiny floor keeps the division
  // finite if a row underflows to zero.
  Tensor norm = egocast::sqrt(add_scalar(sum_axis(mul(raw_rot, raw_rot), 1, true), 1e-24));
  out.rotations = div(raw_rot, norm);
  return out;
}

ForecastOutput ForecastModel::forecast(std::span<const ForecastToken> tokens) const {
  NoGradGuard no_grad;
  const ForecastTensors t = forward(tokens);
  const int J = skeleton_.joint_count();

  ForecastOutput out;
  out.joints.resize(static_cast<std::size_t>(cfg_.horizon));
  out.positions.resize(static_cast<std::size_t>(cfg_.horizon));
  out.rotations.resize(static_cast<std::size_t>(cfg_.horizon));
  const auto q = t.poses.values();
  const auto p = t.translations.values();
  const auto y = t.rotations.values();
  for (int f = 0; f < cfg_.horizon; ++f) {
    out.joints[f].joints.resize(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j)
      out.joints[f].joints[j] = {q[(f * J + j) * 3], q[(f * J + j) * 3 + 1],
                                 q[(f * J + j) * 3 + 2]};
    out.positions[f] = {p[f * 3], p[f * 3 + 1], p[f * 3 + 2]};
    out.rotations[f] = {y[f * 4], y[f * 4 + 1], y[f * 4 + 2], y[f * 4 + 3]};
  }
  return out;
}

std::vector<NamedParam> ForecastModel::named_parameters() {
  std::vector<NamedParam> params;
  input_proj_.collect("input_proj", params);
  params.push_back({"pos_embed", pos_embed_});
  encoder_.collect("encoder", params);
  head_.collect("head", params);
  return params;
}

Tensor forecast_loss_tensor(const ForecastTensors& pred, const Tensor& gt_poses,
                            const Tensor& gt_translations, const Tensor& gt_rotations,
                            const LossWeights& weights) {
  weights.validate();
  Tensor loss = mul_scalar(l1_loss(pred.poses, gt_poses), weights.pose);
  loss = add(loss, mul_scalar(l1_loss(pred.rotations, gt_rotations), weights.rotation));
  loss = add(loss, mul_scalar(l1_loss(pred.translations, gt_translations), weights.translation));
  return loss;
}

namespace {

Quat canonical_sign(const Quat& q) {
  if (q.w < 0) return {-q.w, -q.x, -q.y, -q.z};
  return q;
}

struct TargetTensors {
  Tensor poses, translations, rotations;
};

TargetTensors targets_from_output(const ForecastOutput& gt, int joint_count) {
  const int n = gt.frames();
  std::vector<double> q, p, y;
  q.reserve(static_cast<std::size_t>(n) * joint_count * 3);
  p.reserve(static_cast<std::size_t>(n) * 3);
  y.reserve(static_cast<std::size_t>(n) * 4);
  for (int f = 0; f < n; ++f) {
    if (static_cast<int>(gt.joints[f].joints.size()) != joint_count)
      throw ContractError("ground truth frame " + std::to_string(f) + " has " +
                          std::to_string(gt.joints[f].joints.size()) + " joints, expected " +
                          std::to_string(joint_count));
    for (const Vec3& j : gt.joints[f].joints) {
      q.push_back(j.x);
      q.push_back(j.y);
      q.push_back(j.z);
    }
    p.push_back(gt.positions[f].x);
    p.push_back(gt.positions[f].y);
    p.push_back(gt.positions[f].z);
    const Quat r = canonical_sign(gt.rotations[f]);
    y.push_back(r.w);
    y.push_back(r.x);
    y.push_back(r.y);
    y.push_back(r.z);
  }
  return {Tensor({n, joint_count * 3}, std::move(q)), Tensor({n, 3}, std::move(p)),
          Tensor({n, 4}, std::move(y))};
}

ForecastTensors tensors_from_output(const ForecastOutput& pred, int joint_count) {
  // Reuses the target packing; prediction quaternions are taken as-is.
  const int n = pred.frames();
  std::vector<double> q, p, y;
  for (int f = 0; f < n; ++f) {
    for (const Vec3& j : pred.joints[f].joints) {
      q.push_back(j.x);
      q.push_back(j.y);
      q.push_back(j.z);
    }
    p.push_back(pred.positions[f].x);
    p.push_back(pred.positions[f].y);
    p.push_back(pred.positions[f].z);
    y.push_back(pred.rotations[f].w);
    y.push_back(pred.rotations[f].x);
    y.push_back(pred.rotations[f].y);
    y.push_back(pred.rotations[f].z);
  }
  return {Tensor({n, joint_count * 3}, std::move(q)), Tensor({n, 3}, std::move(p)),
          Tensor({n, 4}, std::move(y))};
}

}  // namespace

double forecast_loss(const ForecastOutput& pred, const ForecastOutput& gt,
                     const LossWeights& weights) {
  if (pred.frames() != gt.frames())
    throw ContractError("prediction covers " + std::to_string(pred.frames()) +
                        " frames, ground truth " + std::to_string(gt.frames()));
  if (pred.frames() == 0) throw ContractError("empty forecast");
  const int joint_count = static_cast<int>(gt.joints.front().joints.size());

  NoGradGuard no_grad;
  const ForecastTensors p = tensors_from_output(pred, joint_count);
  const TargetTensors t = targets_from_output(gt, joint_count);
  return forecast_loss_tensor(p, t.poses, t.translations, t.rotations, weights).item();
}

namespace {

ForecastToken token_for_frame(const PoseFrame& frame, const BodyPose& pose) {
  return build_forecast_token(pose, frame.headset.position, frame.headset.rotation);
}

}  // namespace

ForecastOutput end_to_end_infer(const PoseSequence& seq, int t, const CurrentFrameModel& estimator,
                                const VisualFeatureProvider& provider,
                                const ForecastModel& forecaster) {
  if (estimator.skeleton() != forecaster.skeleton())
    throw ConfigError("estimator and forecaster skeletons differ");
  if (seq.skeleton != forecaster.skeleton())
    throw ConfigError("sequence skeleton differs from the model skeleton");

  const auto window = past_window(seq, t, forecaster.config().window);
  std::vector<ForecastToken> tokens;
  tokens.reserve(window.size());
  for (const PoseFrame& frame : window)
    tokens.push_back(
        token_for_frame(frame, estimate_current_pose(seq, frame.index, provider, estimator)));
  return forecaster.forecast(tokens);
}

ForecastOutput end_to_end_infer_cached(const PoseSequence& seq, int t,
                                       std::span<const BodyPose> pseudo_track,
                                       const ForecastModel& forecaster) {
  if (seq.skeleton != forecaster.skeleton())
    throw ConfigError("sequence skeleton differs from the model skeleton");
  if (pseudo_track.size() != static_cast<std::size_t>(seq.size()))
    throw ContractError("pseudo-groundtruth track length does not match the sequence");

  const auto window = past_window(seq, t, forecaster.config().window);
  std::vector<ForecastToken> tokens;
  tokens.reserve(window.size());
  for (const PoseFrame& frame : window)
    tokens.push_back(token_for_frame(frame, pseudo_track[frame.index]));
  return forecaster.forecast(tokens);
}

TrainStats train_forecaster(ForecastModel& model, std::span<const PoseSequence> data,
                            const CurrentFrameModel& estimator,
                            const VisualFeatureProvider& provider) {
  const ForecastConfig& cfg = model.config();
  if (estimator.skeleton() != model.skeleton())
    throw ConfigError("estimator and forecaster skeletons differ");

  // Valid anchors need n annotated future frames.
  std::vector<std::pair<int, int>> pool;
  std::vector<std::vector<BodyPose>> past_poses(data.size());
  for (std::size_t s = 0; s < data.size(); ++s) {
    const PoseSequence& seq = data[s];
    if (seq.skeleton != model.skeleton())
      throw ConfigError("sequence skeleton differs from the model skeleton");
    if (seq.size() < cfg.window + cfg.horizon) {
      std::cerr << "warning: skipping sequence '" << seq.activity << "' with " << seq.size()
                << " frames (needs k + n = " << cfg.window + cfg.horizon << ")\n";
      continue;
    }
    bool annotated = true;
    for (const PoseFrame& f : seq.frames) annotated = annotated && f.body.has_value();
    if (!annotated) {
      std::cerr << "warning: skipping sequence '" << seq.activity
                << "' with unannotated frames\n";
      continue;
    }
    // Past tokens match the inference regime: pseudo-groundtruth from the
    // frozen estimator unless ground-truth inputs were requested.
    if (cfg.groundtruth_inputs) {
      for (const PoseFrame& f : seq.frames) past_poses[s].push_back(*f.body);
    } else {
      past_poses[s] = pseudo_groundtruth_track(seq, provider, estimator);
    }
    for (int t = 0; t + cfg.horizon < seq.size(); ++t) pool.emplace_back(static_cast<int>(s), t);
  }
  if (pool.empty()) throw DataError("no usable forecasting samples in the dataset");

  Adam opt(model.named_parameters(), {.lr = cfg.lr});
  Rng rng(derive_seed(cfg.seed, {0x7125ULL}));
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
      std::vector<ForecastToken> tokens;
      tokens.reserve(window.size());
      for (const PoseFrame& frame : window)
        tokens.push_back(token_for_frame(frame, past_poses[s][frame.index]));

      ForecastOutput gt;
      for (int i = 1; i <= cfg.horizon; ++i) {
        const PoseFrame& f = seq.frames[t + i];
        gt.joints.push_back(*f.body);
        gt.positions.push_back(f.headset.position);
        gt.rotations.push_back(f.headset.rotation);
      }
      const TargetTensors targets = targets_from_output(gt, model.skeleton().joint_count());
      Tensor sample_loss = forecast_loss_tensor(model.forward(tokens), targets.poses,
                                                targets.translations, targets.rotations,
                                                cfg.weights);
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
