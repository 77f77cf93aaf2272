#include "hmt/model.hpp"

#include <algorithm>
#include <cctype>

#include "hmt/error.hpp"

namespace hmt {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::Sep: return "SEP";
    case Method::Joint1L: return "Joint-1L";
    case Method::Hmt3a: return "HMT-3a";
    case Method::Hmt3b: return "HMT-3b";
    case Method::Hmt4: return "HMT-4";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (key == "sep") return Method::Sep;
  if (key == "joint1l") return Method::Joint1L;
  if (key == "hmt3a") return Method::Hmt3a;
  if (key == "hmt3b") return Method::Hmt3b;
  if (key == "hmt4") return Method::Hmt4;
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected one of sep, joint-1l, hmt-3a, hmt-3b, hmt-4)");
}

ModelDims dims_for(const LabelSet& labels, std::size_t face_dim, const Variant& variant,
                   std::size_t body_hidden) {
  if (face_dim == 0) throw ConfigError("face feature dimension must be positive");
  if (body_hidden == 0) throw ConfigError("body hidden size must be positive");
  ModelDims dims;
  dims.face_dim = face_dim;
  dims.body_hidden = body_hidden;
  dims.channel_classes = labels.channel_count();
  dims.whole_classes = labels.emotion_count();
  dims.fusion_uses_whole = !(variant.method == Method::Hmt3a && variant.two_vector_fusion);
  return dims;
}

ModelParams ModelParams::zeros(const ModelDims& dims) {
  ModelParams p;
  p.dims = dims;
  p.face_fc = DenseLayer(dims.channel_classes, dims.face_dim);
  p.body_hidden = DenseLayer(dims.body_hidden, dims.pose_dim);
  p.body_fc = DenseLayer(dims.channel_classes, dims.body_hidden);
  p.whole_fc = DenseLayer(dims.whole_classes, dims.whole_input());
  p.fusion_fc = DenseLayer(dims.whole_classes, dims.fusion_input());
  return p;
}

ModelParams ModelParams::init(const ModelDims& dims, Rng& rng) {
  ModelParams p = zeros(dims);
  for (DenseLayer* layer : {&p.face_fc, &p.body_hidden, &p.body_fc, &p.whole_fc, &p.fusion_fc}) {
    layer->weight = lecun_init(layer->out_dim(), layer->in_dim(), rng);
  }
  return p;
}

std::vector<ParamBlock> ModelParams::blocks() {
  return {
      {"face_fc.weight", face_fc.weight.values()},     {"face_fc.bias", face_fc.bias},
      {"body_hidden.weight", body_hidden.weight.values()}, {"body_hidden.bias", body_hidden.bias},
      {"body_fc.weight", body_fc.weight.values()},     {"body_fc.bias", body_fc.bias},
      {"whole_fc.weight", whole_fc.weight.values()},   {"whole_fc.bias", whole_fc.bias},
      {"fusion_fc.weight", fusion_fc.weight.values()}, {"fusion_fc.bias", fusion_fc.bias},
  };
}

std::vector<ConstParamBlock> ModelParams::blocks() const {
  std::vector<ConstParamBlock> out;
  for (const ParamBlock& b : const_cast<ModelParams*>(this)->blocks()) out.push_back({b.name, b.values});
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += b.values.size();
  return n;
}

void ModelParams::set_zero() {
  for (DenseLayer* layer : {&face_fc, &body_hidden, &body_fc, &whole_fc, &fusion_fc}) layer->set_zero();
}

bool ModelParams::all_finite() const {
  for (const auto& b : blocks()) {
    if (!hmt::all_finite(b.values)) return false;
  }
  return true;
}

FaceBranchResult face_branch_forward(std::span<const std::optional<Vector>> face_frames,
                                     const ModelParams& params) {
  std::vector<ConstSpan> present;
  for (const auto& f : face_frames) {
    if (f) {
      if (f->size() != params.dims.face_dim) {
        throw ShapeError("face_branch_forward: face feature has " + std::to_string(f->size()) +
                         " entries, model expects " + std::to_string(params.dims.face_dim));
      }
      present.emplace_back(*f);
    }
  }
  FaceBranchResult out;
  if (present.empty()) {
    out.h_face.assign(params.dims.face_dim, 0.0);
    out.face_absent = true;
  } else {
    MaxPoolResult pooled = temporal_max_pool(present);
    out.h_face = std::move(pooled.pooled);
    out.argmax = std::move(pooled.argmax);
  }
  out.s_face = dense_forward(out.h_face, params.face_fc);
  return out;
}

BodyBranchResult body_branch_forward(std::span<const SkeletonFrame> pose_frames,
                                     const ModelParams& params, double threshold) {
  if (pose_frames.empty()) throw ShapeError("body_branch_forward: empty pose sequence");
  BodyBranchResult out;
  std::vector<Vector> hidden;
  for (const SkeletonFrame& frame : pose_frames) {
    Vector x = flatten_pose(filter_keypoints(frame, threshold));
    Vector pre = dense_forward(x, params.body_hidden);
    hidden.push_back(relu(pre));
    out.pose_inputs.push_back(std::move(x));
    out.pre_hidden.push_back(std::move(pre));
  }
  std::vector<ConstSpan> views(hidden.begin(), hidden.end());
  out.h_body = temporal_avg_pool(views);
  out.s_body = dense_forward(out.h_body, params.body_fc);
  return out;
}

Vector whole_body_forward(ConstSpan h_face, ConstSpan h_body, const ModelParams& params) {
  if (h_face.size() != params.dims.face_dim || h_body.size() != params.dims.body_hidden)
    throw ShapeError("whole_body_forward: representation sizes do not match the model");
  Vector joined(h_face.begin(), h_face.end());
  joined.insert(joined.end(), h_body.begin(), h_body.end());
  return dense_forward(joined, params.whole_fc);
}

namespace {

Vector fusion_input(ConstSpan s_face, ConstSpan s_body, std::optional<ConstSpan> s_whole) {
  Vector joined(s_face.begin(), s_face.end());
  joined.insert(joined.end(), s_body.begin(), s_body.end());
  if (s_whole) joined.insert(joined.end(), s_whole->begin(), s_whole->end());
  return joined;
}

struct Wiring {
  bool face = false;        // H_face needed
  bool body = false;        // H_body needed
  bool face_score = false;  // s_face
  bool body_score = false;  // s_body
  bool whole = false;       // s_whole
  bool fused = false;       // s_fused
};

Wiring wiring_for(const Variant& v) {
  Wiring w;
  switch (v.method) {
    case Method::Sep:
      w.face = w.face_score = v.sep_branch != SepBranch::Body;
      w.body = w.body_score = v.sep_branch != SepBranch::Face;
      break;
    case Method::Joint1L:
      w.face = w.body = w.whole = true;
      break;
    case Method::Hmt3a:
      w.face = w.body = w.face_score = w.body_score = w.fused = true;
      w.whole = !v.two_vector_fusion;
      break;
    case Method::Hmt3b:
      w.face = w.body = w.face_score = w.body_score = w.whole = true;
      break;
    case Method::Hmt4:
      w.face = w.body = w.face_score = w.body_score = w.whole = w.fused = true;
      break;
  }
  return w;
}

}  // namespace

Vector fusion_forward(ConstSpan s_face, ConstSpan s_body, std::optional<ConstSpan> s_whole,
                      const ModelParams& params) {
  if (s_whole.has_value() != params.dims.fusion_uses_whole)
    throw ShapeError("fusion_forward: whole-body score presence does not match the model wiring");
  if (s_face.size() != params.dims.channel_classes || s_body.size() != params.dims.channel_classes ||
      (s_whole && s_whole->size() != params.dims.whole_classes))
    throw ShapeError("fusion_forward: score vector sizes do not match the model");
  return dense_forward(fusion_input(s_face, s_body, s_whole), params.fusion_fc);
}

ForwardTrace hmt_forward_trace(const SampleSequence& sample, const ModelParams& params,
                               const Variant& variant, double threshold) {
  if (sample.pose_frames.empty()) throw ShapeError("hmt_forward: sample has no frames");
  if (sample.face_frames.size() != sample.pose_frames.size())
    throw ShapeError("hmt_forward: pose and face frame counts differ");
  const Wiring w = wiring_for(variant);
  if (w.fused && w.whole != params.dims.fusion_uses_whole)
    throw ShapeError("hmt_forward: variant fusion wiring does not match the model dimensions");

  std::span<const SkeletonFrame> poses = sample.pose_frames;
  std::span<const std::optional<Vector>> faces = sample.face_frames;
  if (variant.frame_level) {
    const std::size_t middle = sample.frame_count() / 2;
    poses = poses.subspan(middle, 1);
    faces = faces.subspan(middle, 1);
  }

  ForwardTrace trace;
  BranchOutputs& out = trace.outputs;
  if (w.face) {
    FaceBranchResult face = face_branch_forward(faces, params);
    out.face_absent = face.face_absent;
    if (w.face_score) out.s_face = std::move(face.s_face);
    out.h_face = std::move(face.h_face);
    trace.face_argmax = std::move(face.argmax);
  }
  if (w.body) {
    BodyBranchResult body = body_branch_forward(poses, params, threshold);
    if (w.body_score) out.s_body = std::move(body.s_body);
    out.h_body = std::move(body.h_body);
    trace.pose_inputs = std::move(body.pose_inputs);
    trace.pre_hidden = std::move(body.pre_hidden);
  }
  if (w.whole) out.s_whole = whole_body_forward(*out.h_face, *out.h_body, params);
  if (w.fused) {
    std::optional<ConstSpan> whole;
    if (out.s_whole) whole = ConstSpan(*out.s_whole);
    out.s_fused = fusion_forward(*out.s_face, *out.s_body, whole, params);
  }
  return trace;
}

BranchOutputs hmt_forward(const SampleSequence& sample, const ModelParams& params,
                          const Variant& variant, double threshold) {
  return hmt_forward_trace(sample, params, variant, threshold).outputs;
}

std::string_view loss_term_name(LossTerm term) {
  switch (term) {
    case LossTerm::Face: return "L_f";
    case LossTerm::Body: return "L_b";
    case LossTerm::Whole: return "L_w";
    case LossTerm::Fused: return "L_d";
  }
  return "?";
}

std::vector<LossTerm> supervised_terms(const Variant& variant) {
  switch (variant.method) {
    case Method::Sep:
      switch (variant.sep_branch) {
        case SepBranch::Face: return {LossTerm::Face};
        case SepBranch::Body: return {LossTerm::Body};
        case SepBranch::Both: return {LossTerm::Face, LossTerm::Body};
      }
      break;
    case Method::Joint1L: return {LossTerm::Whole};
    case Method::Hmt3a: return {LossTerm::Face, LossTerm::Body, LossTerm::Fused};
    case Method::Hmt3b: return {LossTerm::Face, LossTerm::Body, LossTerm::Whole};
    case Method::Hmt4: return {LossTerm::Face, LossTerm::Body, LossTerm::Whole, LossTerm::Fused};
  }
  return {};
}

LossResult hmt_loss_with_grad(const BranchOutputs& outputs, const HierarchicalLabel& label,
                              const Variant& variant, ConstSpan body_class_weights) {
  LossResult result;
  for (LossTerm term : supervised_terms(variant)) {
    const std::optional<Vector>* scores = nullptr;
    std::optional<Vector>* grad = nullptr;
    ClassId target = label.whole;
    ConstSpan weights;
    switch (term) {
      case LossTerm::Face:
        scores = &outputs.s_face;
        grad = &result.grads.s_face;
        target = label.face;
        break;
      case LossTerm::Body:
        scores = &outputs.s_body;
        grad = &result.grads.s_body;
        target = label.body;
        weights = body_class_weights;
        break;
      case LossTerm::Whole:
        scores = &outputs.s_whole;
        grad = &result.grads.s_whole;
        break;
      case LossTerm::Fused:
        scores = &outputs.s_fused;
        grad = &result.grads.s_fused;
        break;
    }
    if (!scores->has_value()) {
      throw ShapeError("hmt_loss: outputs lack the scores for " + std::string(loss_term_name(term)));
    }
    LossWithGrad ce = weighted_cross_entropy(**scores, target, weights);
    result.breakdown.components[static_cast<std::size_t>(term)] = ce.loss;
    *grad = std::move(ce.grad);
  }
  for (const auto& c : result.breakdown.components) {
    if (c) result.breakdown.total += *c;
  }
  return result;
}

LossBreakdown hmt_loss(const BranchOutputs& outputs, const HierarchicalLabel& label,
                       const Variant& variant, ConstSpan body_class_weights) {
  return hmt_loss_with_grad(outputs, label, variant, body_class_weights).breakdown;
}

namespace {

void add_into(std::optional<Vector>& target, ConstSpan delta) {
  if (!target) {
    target = Vector(delta.begin(), delta.end());
    return;
  }
  for (std::size_t i = 0; i < delta.size(); ++i) (*target)[i] += delta[i];
}

}  // namespace

void hmt_backward(const ForwardTrace& trace, const ScoreGradients& score_grads,
                  const ModelParams& params, ModelParams& grads) {
  const BranchOutputs& out = trace.outputs;
  const ModelDims& dims = params.dims;
  std::optional<Vector> ds_face = score_grads.s_face;
  std::optional<Vector> ds_body = score_grads.s_body;
  std::optional<Vector> ds_whole = score_grads.s_whole;
  std::optional<Vector> dh_body;

  if (score_grads.s_fused) {
    if (!out.s_fused) throw ShapeError("hmt_backward: fused-score gradient without fused scores");
    std::optional<ConstSpan> whole;
    if (dims.fusion_uses_whole) whole = ConstSpan(*out.s_whole);
    const Vector input = fusion_input(*out.s_face, *out.s_body, whole);
    const Vector dx = dense_backward(input, *score_grads.s_fused, params.fusion_fc, grads.fusion_fc);
    const std::size_t c = dims.channel_classes;
    const ConstSpan dxs(dx);
    add_into(ds_face, dxs.subspan(0, c));
    add_into(ds_body, dxs.subspan(c, c));
    if (dims.fusion_uses_whole) add_into(ds_whole, dxs.subspan(2 * c, dims.whole_classes));
  }
  if (ds_whole) {
    Vector joined(out.h_face->begin(), out.h_face->end());
    joined.insert(joined.end(), out.h_body->begin(), out.h_body->end());
    const Vector dx = dense_backward(joined, *ds_whole, params.whole_fc, grads.whole_fc);
    // Face features are fixed inputs; only the body part propagates further.
    add_into(dh_body, ConstSpan(dx).subspan(dims.face_dim, dims.body_hidden));
  }
  if (ds_face) dense_accumulate(*out.h_face, *ds_face, grads.face_fc);
  if (ds_body) {
    const Vector dh = dense_backward(*out.h_body, *ds_body, params.body_fc, grads.body_fc);
    add_into(dh_body, dh);
  }
  if (dh_body) {
    const std::size_t frames = trace.pre_hidden.size();
    const Vector share = temporal_avg_pool_backward(*dh_body, frames).front();
    for (std::size_t f = 0; f < frames; ++f) {
      const Vector dpre = relu_backward(trace.pre_hidden[f], share);
      dense_accumulate(trace.pose_inputs[f], dpre, grads.body_hidden);
    }
  }
}

ClassId argmax(ConstSpan scores) {
  if (scores.empty()) throw ShapeError("argmax: empty score vector");
  ClassId best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

ScoreSource prediction_source(Method method) {
  switch (method) {
    case Method::Hmt4:
    case Method::Hmt3a: return ScoreSource::Fused;
    case Method::Hmt3b:
    case Method::Joint1L: return ScoreSource::Whole;
    case Method::Sep: break;
  }
  throw ConfigError("SEP has no whole-body prediction source; pick a branch explicitly");
}

ClassId predict(const BranchOutputs& outputs, ScoreSource source) {
  const std::optional<Vector>* scores = nullptr;
  switch (source) {
    case ScoreSource::Face: scores = &outputs.s_face; break;
    case ScoreSource::Body: scores = &outputs.s_body; break;
    case ScoreSource::Whole: scores = &outputs.s_whole; break;
    case ScoreSource::Fused: scores = &outputs.s_fused; break;
  }
  if (!scores->has_value()) throw ShapeError("predict: prediction source scores are absent");
  return argmax(**scores);
}

ClassId predict(const BranchOutputs& outputs, Method method) {
  return predict(outputs, prediction_source(method));
}

}  // namespace hmt
