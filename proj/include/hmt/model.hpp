#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmt/data.hpp"
#include "hmt/numcore.hpp"

namespace hmt {

enum class Method { Sep, Joint1L, Hmt3a, Hmt3b, Hmt4 };

std::string_view method_name(Method method);
Method parse_method(std::string_view name);  // accepts "hmt4", "HMT-4", "joint-1l", ...
inline constexpr std::array<Method, 5> kAllMethods{Method::Sep, Method::Joint1L, Method::Hmt3a,
                                                   Method::Hmt3b, Method::Hmt4};

// Which branches a SEP run trains. Both is used when evaluating SEP models.
enum class SepBranch { Both, Face, Body };

struct Variant {
  Method method = Method::Hmt4;
  // Use only the middle frame (index N/2) and skip temporal pooling.
  bool frame_level = false;
  // HMT-3a only: fuse s_face and s_body without s_whole.
  bool two_vector_fusion = false;
  SepBranch sep_branch = SepBranch::Both;

  bool operator==(const Variant&) const = default;
};

struct ModelDims {
  std::size_t face_dim = 2048;
  std::size_t pose_dim = kPoseDim;
  std::size_t body_hidden = 256;
  std::size_t channel_classes = 7;
  std::size_t whole_classes = 6;
  bool fusion_uses_whole = true;

  std::size_t whole_input() const { return face_dim + body_hidden; }
  std::size_t fusion_input() const {
    return 2 * channel_classes + (fusion_uses_whole ? whole_classes : 0);
  }
  bool operator==(const ModelDims&) const = default;
};

ModelDims dims_for(const LabelSet& labels, std::size_t face_dim, const Variant& variant,
                   std::size_t body_hidden = 256);

struct ParamBlock {
  std::string_view name;
  MutSpan values;
};

struct ConstParamBlock {
  std::string_view name;
  ConstSpan values;
};

struct ModelParams {
  ModelDims dims;
  DenseLayer face_fc;
  DenseLayer body_hidden;
  DenseLayer body_fc;
  DenseLayer whole_fc;
  DenseLayer fusion_fc;

  // Zero-valued parameters of the given shape.
  static ModelParams zeros(const ModelDims& dims);
  // LeCun-uniform weights and zero biases, layers drawn in declaration order.
  static ModelParams init(const ModelDims& dims, Rng& rng);

  // Ten blocks: <layer>.weight and <layer>.bias for every layer.
  std::vector<ParamBlock> blocks();
  std::vector<ConstParamBlock> blocks() const;
  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;

  bool operator==(const ModelParams&) const = default;
};

struct BranchOutputs {
  std::optional<Vector> h_face;
  std::optional<Vector> h_body;
  std::optional<Vector> s_face;
  std::optional<Vector> s_body;
  std::optional<Vector> s_whole;
  std::optional<Vector> s_fused;
  bool face_absent = false;  // no frame of the sample had a face feature
};

// Intermediate values needed by the backward pass.
struct ForwardTrace {
  BranchOutputs outputs;
  std::vector<Vector> pose_inputs;   // filtered, flattened per used frame
  std::vector<Vector> pre_hidden;    // body_hidden pre-activations per used frame
  std::vector<std::size_t> face_argmax;
};

struct FaceBranchResult {
  Vector h_face;
  Vector s_face;
  bool face_absent = false;
  std::vector<std::size_t> argmax;
};

struct BodyBranchResult {
  Vector h_body;
  Vector s_body;
  std::vector<Vector> pose_inputs;
  std::vector<Vector> pre_hidden;
};

FaceBranchResult face_branch_forward(std::span<const std::optional<Vector>> face_frames,
                                     const ModelParams& params);
BodyBranchResult body_branch_forward(std::span<const SkeletonFrame> pose_frames,
                                     const ModelParams& params, double threshold);
Vector whole_body_forward(ConstSpan h_face, ConstSpan h_body, const ModelParams& params);
Vector fusion_forward(ConstSpan s_face, ConstSpan s_body, std::optional<ConstSpan> s_whole,
                      const ModelParams& params);

ForwardTrace hmt_forward_trace(const SampleSequence& sample, const ModelParams& params,
                               const Variant& variant, double threshold);
BranchOutputs hmt_forward(const SampleSequence& sample, const ModelParams& params,
                          const Variant& variant, double threshold);

enum class LossTerm { Face, Body, Whole, Fused };
inline constexpr std::array<LossTerm, 4> kLossTerms{LossTerm::Face, LossTerm::Body, LossTerm::Whole,
                                                    LossTerm::Fused};
std::string_view loss_term_name(LossTerm term);  // "L_f", "L_b", "L_w", "L_d"

// Which loss terms supervise a variant.
std::vector<LossTerm> supervised_terms(const Variant& variant);

struct LossBreakdown {
  double total = 0.0;
  std::array<std::optional<double>, 4> components;  // indexed by LossTerm

  std::optional<double> get(LossTerm term) const { return components[static_cast<std::size_t>(term)]; }
};

struct ScoreGradients {
  std::optional<Vector> s_face;
  std::optional<Vector> s_body;
  std::optional<Vector> s_whole;
  std::optional<Vector> s_fused;
};

struct LossResult {
  LossBreakdown breakdown;
  ScoreGradients grads;
};

// Cross-entropy losses for the variant's supervised terms; body weights apply to L_b only.
LossResult hmt_loss_with_grad(const BranchOutputs& outputs, const HierarchicalLabel& label,
                              const Variant& variant, ConstSpan body_class_weights);
LossBreakdown hmt_loss(const BranchOutputs& outputs, const HierarchicalLabel& label,
                       const Variant& variant, ConstSpan body_class_weights);

// Accumulates dL/dparams for one sample into `grads` (same shape as params).
void hmt_backward(const ForwardTrace& trace, const ScoreGradients& score_grads,
                  const ModelParams& params, ModelParams& grads);

enum class ScoreSource { Face, Body, Whole, Fused };

// Argmax with ties resolved to the lowest index.
ClassId argmax(ConstSpan scores);

// Whole-body prediction source: s_fused for HMT-4/HMT-3a, s_whole for HMT-3b and
// Joint-1L. SEP has no whole-body source and requires an explicit branch.
ScoreSource prediction_source(Method method);
ClassId predict(const BranchOutputs& outputs, Method method);
ClassId predict(const BranchOutputs& outputs, ScoreSource source);

}  // namespace hmt
