#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hmt/error.hpp"
#include "hmt/gradcheck.hpp"
#include "hmt/model.hpp"
#include "hmt/synthetic.hpp"

using namespace hmt;

namespace {

struct Fixture {
  LabelSet labels = LabelSet::bred();
  Rng rng{RngSeed{21}};
  std::size_t face_dim = 6;

  ModelParams params(const Variant& v) {
    ModelParams p = ModelParams::init(dims_for(labels, face_dim, v, 5), rng);
    for (auto& block : p.blocks()) {
      for (double& x : block.values) x += 0.1 * rng.normal();
    }
    return p;
  }

  SampleSequence sample(std::size_t frames) {
    return random_samples(labels, 1, frames, face_dim, rng).front();
  }
};

bool same(const std::optional<Vector>& a, const std::optional<Vector>& b, double tol = 0.0) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  if (a->size() != b->size()) return false;
  for (std::size_t i = 0; i < a->size(); ++i) {
    if (std::abs((*a)[i] - (*b)[i]) > tol * std::max(1.0, std::abs((*a)[i]))) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_method("hmt-4") == Method::Hmt4);
  CHECK(parse_method("HMT-3a") == Method::Hmt3a);
  CHECK(parse_method("joint-1l") == Method::Joint1L);
  CHECK(parse_method("sep") == Method::Sep);
  CHECK_THROWS_AS(parse_method("hmt-5"), ConfigError);
  for (Method m : kAllMethods) CHECK(parse_method(method_name(m)) == m);
}

TEST_CASE("dimensions") {
  const LabelSet bred = LabelSet::bred();
  const ModelDims d = dims_for(bred, 2048, Variant{}, 256);
  CHECK(d.fusion_input() == 20);
  CHECK(d.whole_classes == 6);
  CHECK(d.channel_classes == 7);
  CHECK(d.whole_input() == 2304);
  std::vector<std::string> twelve;
  for (int i = 0; i < 12; ++i) twelve.push_back("e" + std::to_string(i));
  const LabelSet gemep("gemep", twelve, std::nullopt);
  const ModelDims g = dims_for(gemep, 2048, Variant{}, 256);
  CHECK(g.fusion_input() == 36);
  CHECK(g.whole_classes == 12);
  Variant two;
  two.method = Method::Hmt3a;
  two.two_vector_fusion = true;
  CHECK(dims_for(bred, 2048, two, 256).fusion_input() == 14);
}

TEST_CASE("parameter blocks") {
  Fixture fx;
  ModelParams p = fx.params(Variant{});
  const auto blocks = p.blocks();
  REQUIRE(blocks.size() == 10);
  CHECK(blocks[0].name == "face_fc.weight");
  std::size_t total = 0;
  for (const auto& b : blocks) total += b.values.size();
  CHECK(total == p.parameter_count());
  const ModelDims& d = p.dims;
  CHECK(p.parameter_count() == d.channel_classes * (d.face_dim + 1) + d.body_hidden * (d.pose_dim + 1) +
                                   d.channel_classes * (d.body_hidden + 1) +
                                   d.whole_classes * (d.whole_input() + 1) +
                                   d.whole_classes * (d.fusion_input() + 1));
  Rng a(RngSeed{1}), b(RngSeed{1});
  CHECK(ModelParams::init(d, a) == ModelParams::init(d, b));
  const ModelParams fresh = ModelParams::init(d, a);
  for (const auto& blk : fresh.blocks()) {
    if (blk.name.ends_with(".bias")) CHECK(std::all_of(blk.values.begin(), blk.values.end(), [](double v) { return v == 0.0; }));
  }
}

TEST_CASE("face branch max pooling") {
  Fixture fx;
  fx.face_dim = 3;
  const ModelParams p = fx.params(Variant{});
  std::vector<std::optional<Vector>> frames{Vector{1, 0, 0}, Vector{0, 1, 0}};
  const FaceBranchResult r = face_branch_forward(frames, p);
  CHECK(r.h_face == Vector{1, 1, 0});
  std::vector<std::optional<Vector>> one{Vector{0.3, -2, 5}};
  CHECK(face_branch_forward(one, p).h_face == Vector{0.3, -2, 5});
  std::vector<std::optional<Vector>> reversed(frames.rbegin(), frames.rend());
  const FaceBranchResult rr = face_branch_forward(reversed, p);
  CHECK(rr.h_face == r.h_face);
  CHECK(rr.s_face == r.s_face);
  std::vector<std::optional<Vector>> with_gap{std::nullopt, Vector{1, 2, 3}};
  CHECK(face_branch_forward(with_gap, p).h_face == Vector{1, 2, 3});
  std::vector<std::optional<Vector>> none{std::nullopt, std::nullopt};
  const FaceBranchResult absent = face_branch_forward(none, p);
  CHECK(absent.face_absent);
  CHECK(absent.h_face == Vector(3, 0.0));
}

TEST_CASE("body branch average pooling") {
  Fixture fx;
  const ModelParams p = fx.params(Variant{});
  const SampleSequence s = fx.sample(4);
  std::vector<SkeletonFrame> repeated(5, s.pose_frames[0]);
  const std::vector<SkeletonFrame> single{s.pose_frames[0]};
  const BodyBranchResult a = body_branch_forward(repeated, p, 0.1);
  const BodyBranchResult b = body_branch_forward(single, p, 0.1);
  for (std::size_t i = 0; i < a.h_body.size(); ++i) CHECK(a.h_body[i] == doctest::Approx(b.h_body[i]).epsilon(1e-12));
  std::vector<SkeletonFrame> permuted(s.pose_frames.rbegin(), s.pose_frames.rend());
  std::rotate(permuted.begin(), permuted.begin() + 1, permuted.end());
  const BodyBranchResult c = body_branch_forward(s.pose_frames, p, 0.1);
  const BodyBranchResult d = body_branch_forward(permuted, p, 0.1);
  for (std::size_t i = 0; i < c.s_body.size(); ++i) CHECK(c.s_body[i] == doctest::Approx(d.s_body[i]).epsilon(1e-12));
}

TEST_CASE("whole-body and fusion layers") {
  Fixture fx;
  const ModelParams p = fx.params(Variant{});
  const ModelDims& d = p.dims;
  CHECK(whole_body_forward(Vector(d.face_dim, 0.0), Vector(d.body_hidden, 0.0), p) == p.whole_fc.bias);
  // Face occupies the leading columns of whole_fc.
  Vector h_face(d.face_dim, 0.0), h_body(d.body_hidden, 0.0);
  h_face[0] = 1.0;
  const Vector s = whole_body_forward(h_face, h_body, p);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(p.whole_fc.weight(i, 0) + p.whole_fc.bias[i]));
  h_face[0] = 0.0;
  h_body[0] = 1.0;
  const Vector t = whole_body_forward(h_face, h_body, p);
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(t[i] == doctest::Approx(p.whole_fc.weight(i, d.face_dim) + p.whole_fc.bias[i]));
  CHECK(s.size() == 6);
  const Vector zc(d.channel_classes, 0.0), zw(d.whole_classes, 0.0);
  const Vector fused = fusion_forward(zc, zc, ConstSpan(zw), p);
  CHECK(fused == p.fusion_fc.bias);
  CHECK(fused.size() == 6);
}

TEST_CASE("variant wiring") {
  Fixture fx;
  const SampleSequence s = fx.sample(3);
  Variant v4;
  const BranchOutputs o4 = hmt_forward(s, fx.params(v4), v4, 0.1);
  CHECK((o4.h_face && o4.h_body && o4.s_face && o4.s_body && o4.s_whole && o4.s_fused));
  Variant j;
  j.method = Method::Joint1L;
  const BranchOutputs oj = hmt_forward(s, fx.params(j), j, 0.1);
  CHECK_FALSE(oj.s_face.has_value());
  CHECK_FALSE(oj.s_body.has_value());
  CHECK(oj.s_whole.has_value());
  CHECK_FALSE(oj.s_fused.has_value());
  Variant b;
  b.method = Method::Hmt3b;
  const BranchOutputs ob = hmt_forward(s, fx.params(b), b, 0.1);
  CHECK((ob.s_face && ob.s_body && ob.s_whole));
  CHECK_FALSE(ob.s_fused.has_value());
}

TEST_CASE("frame-level mode uses the middle frame") {
  Fixture fx;
  Variant video;
  Variant frame;
  frame.frame_level = true;
  const ModelParams p = fx.params(video);
  const SampleSequence one = fx.sample(1);
  const BranchOutputs a = hmt_forward(one, p, video, 0.1);
  const BranchOutputs b = hmt_forward(one, p, frame, 0.1);
  CHECK(same(a.s_fused, b.s_fused));
  SampleSequence five = fx.sample(5);
  SampleSequence mid = five;
  mid.pose_frames = {five.pose_frames[2]};
  mid.face_frames = {five.face_frames[2]};
  CHECK(same(hmt_forward(five, p, frame, 0.1).s_fused, hmt_forward(mid, p, video, 0.1).s_fused));
  CHECK(same(hmt_forward(five, p, frame, 0.1).h_body, hmt_forward(mid, p, video, 0.1).h_body));
}

TEST_CASE("loss composition") {
  Fixture fx;
  const Vector unit(7, 1.0);
  for (Method m : {Method::Hmt4, Method::Hmt3a, Method::Hmt3b, Method::Joint1L}) {
    Variant v;
    v.method = m;
    const ModelParams p = fx.params(v);
    const SampleSequence s = fx.sample(3);
    const LossBreakdown l = hmt_loss(hmt_forward(s, p, v, 0.1), s.label, v, unit);
    double sum = 0.0;
    std::vector<LossTerm> present;
    for (LossTerm t : kLossTerms) {
      if (l.get(t)) {
        sum += *l.get(t);
        present.push_back(t);
      }
    }
    CHECK(l.total == doctest::Approx(sum).epsilon(1e-12));
    std::vector<LossTerm> expected = supervised_terms(v);
    std::sort(expected.begin(), expected.end());
    CHECK(present == expected);
  }
  Variant a;
  a.method = Method::Hmt3a;
  const auto terms = supervised_terms(a);
  CHECK(terms.size() == 3);
  CHECK(std::find(terms.begin(), terms.end(), LossTerm::Whole) == terms.end());
  Variant v4;
  CHECK(supervised_terms(v4).size() == 4);
}

TEST_CASE("body weights scale L_b only") {
  Fixture fx;
  Variant v;
  const ModelParams p = fx.params(v);
  const SampleSequence s = fx.sample(3);
  const BranchOutputs o = hmt_forward(s, p, v, 0.1);
  const LossBreakdown plain = hmt_loss(o, s.label, v, Vector(7, 1.0));
  CHECK(*plain.get(LossTerm::Body) == doctest::Approx(weighted_cross_entropy(*o.s_body, s.label.body).loss));
  const LossBreakdown heavy = hmt_loss(o, s.label, v, Vector(7, 2.0));
  CHECK(*heavy.get(LossTerm::Body) == doctest::Approx(2.0 * *plain.get(LossTerm::Body)));
  CHECK(*heavy.get(LossTerm::Face) == *plain.get(LossTerm::Face));
  CHECK(*heavy.get(LossTerm::Fused) == *plain.get(LossTerm::Fused));
}

TEST_CASE("prediction") {
  CHECK(argmax(Vector{0.1, 2.0, -1.0}) == 1);
  CHECK(argmax(Vector{0.0, 1.0, 3.0, 0.5, 3.0}) == 2);
  CHECK(prediction_source(Method::Hmt4) == ScoreSource::Fused);
  CHECK(prediction_source(Method::Hmt3a) == ScoreSource::Fused);
  CHECK(prediction_source(Method::Hmt3b) == ScoreSource::Whole);
  CHECK(prediction_source(Method::Joint1L) == ScoreSource::Whole);
  CHECK_THROWS_AS(prediction_source(Method::Sep), ConfigError);
  BranchOutputs o;
  o.s_whole = Vector{0.0, 5.0, 1.0};
  o.s_fused = Vector{4.0, 0.0, 1.0};
  CHECK(predict(o, Method::Hmt3b) == 1);
  CHECK(predict(o, Method::Hmt4) == 0);
}

TEST_CASE("analytic gradients agree with finite differences") {
  for (Method m : kAllMethods) {
    ModelGradCheckConfig config;
    config.variant.method = m;
    const ModelGradCheckReport r = check_model_gradients(config);
    CAPTURE(method_name(m));
    CHECK(r.max_rel_error() <= 1e-4);
  }
  ModelGradCheckConfig corrupt;
  corrupt.corrupt = true;
  CHECK(check_model_gradients(corrupt).max_rel_error() == doctest::Approx(0.5).epsilon(1e-4));
}
