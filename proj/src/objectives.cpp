#include "uaopose/objectives.hpp"

#include <cmath>

#include "uaopose/errors.hpp"

namespace uaopose {

namespace {

void same_shape(const char* op, ad::Var a, ad::Var b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": joint arrays differ, " + ad::shape_str(a.shape()) + " vs " +
                     ad::shape_str(b.shape()));
}

// Per-joint squared distance, shape = input shape minus the coordinate axis.
ad::Var squared_distance(ad::Var a, ad::Var b) {
  ad::Var d = ad::sub(a, b);
  return ad::sum_last(ad::mul(d, d));
}

ad::Var anchor_weights(ad::Tape& tape, const Eigen::VectorXd& s) {
  ad::Tensor w({static_cast<std::size_t>(s.size())});
  for (Eigen::Index k = 0; k < s.size(); ++k) w[static_cast<std::size_t>(k)] = std::exp(-s(k));
  return tape.constant(std::move(w));
}

}  // namespace

ad::Var mpjpe_loss(ad::Var pred, ad::Var gt) {
  same_shape("mpjpe_loss", pred, gt);
  return ad::mean(ad::sqrt(squared_distance(pred, gt)));
}

ad::Var nll_train_loss(ad::Var mu, ad::Var s, ad::Var gt) {
  same_shape("nll_train_loss", mu, gt);
  const ad::Shape& ms = mu.shape();
  if (ad::Shape(ms.begin(), ms.end() - 1) != s.shape())
    throw ShapeError("nll_train_loss: log-variance " + ad::shape_str(s.shape()) +
                     " does not match mean " + ad::shape_str(ms));
  ad::Var weighted = ad::mul(squared_distance(gt, mu), ad::exp(ad::scale(s, -1.0)));
  return ad::scale(ad::mean(ad::add(weighted, s)), 0.5);
}

ad::Var projection_loss(ad::Var pred3d, ad::Var j2d, const ProjectionMatrix& p) {
  ad::Var projected = project(pred3d, p);
  same_shape("projection_loss", projected, j2d);
  return ad::mean(ad::sqrt(squared_distance(projected, j2d)));
}

ad::Var uncertainty_loss(ad::Var current, const GaussianPosePrediction& anchor) {
  ad::Tape& tape = *current.tape();
  ad::Var mu = tape.constant(to_tensor(anchor.mu));
  if (current.shape() != mu.shape())
    throw ShapeError("uncertainty_loss: current " + ad::shape_str(current.shape()) +
                     " vs anchor " + ad::shape_str(mu.shape()));
  if (static_cast<Eigen::Index>(mu.shape()[0]) != anchor.s.size())
    throw ShapeError("uncertainty_loss: anchor s has the wrong length");
  ad::Var weighted = ad::mul(squared_distance(mu, current), anchor_weights(tape, anchor.s));
  return ad::scale(ad::mean(weighted), 0.5);
}

ad::Var uncertainty_loss(ad::Var current, ad::Var anchor_mu, ad::Var anchor_s) {
  ad::Var mu = ad::detach(anchor_mu);
  ad::Var s = ad::detach(anchor_s);
  same_shape("uncertainty_loss", current, mu);
  ad::Var weighted = ad::mul(squared_distance(mu, current), ad::exp(ad::scale(s, -1.0)));
  return ad::scale(ad::mean(weighted), 0.5);
}

CombinedLoss combined_loss(ad::Var current3d, ad::Var j2d, const ProjectionMatrix& p,
                           const GaussianPosePrediction& anchor, double lambda_projection,
                           double lambda_uncertainty) {
  if (!(lambda_projection >= 0.0) || !(lambda_uncertainty >= 0.0))
    throw ContractError("combined_loss: loss weights must be non-negative");
  ad::Var proj = projection_loss(current3d, j2d, p);
  ad::Var unc = uncertainty_loss(current3d, anchor);
  CombinedLoss out;
  out.total = ad::add(ad::scale(proj, lambda_projection), ad::scale(unc, lambda_uncertainty));
  out.values.projection = proj.value().item();
  out.values.uncertainty = unc.value().item();
  out.values.total = out.total.value().item();
  return out;
}

double mpjpe_loss(const Pose3D& pred, const Pose3D& gt) {
  ad::Tape tape;
  return mpjpe_loss(tape.constant(to_tensor(pred)), tape.constant(to_tensor(gt))).value().item();
}

double nll_train_loss(const GaussianPosePrediction& pred, const Pose3D& gt) {
  ad::Tape tape;
  ad::Tensor s({static_cast<std::size_t>(pred.s.size())},
               std::vector<double>(pred.s.data(), pred.s.data() + pred.s.size()));
  return nll_train_loss(tape.constant(to_tensor(pred.mu)), tape.constant(std::move(s)),
                        tape.constant(to_tensor(gt)))
      .value()
      .item();
}

double projection_loss(const Pose3D& pred3d, const Pose2D& j2d, const ProjectionMatrix& p) {
  ad::Tape tape;
  return projection_loss(tape.constant(to_tensor(pred3d)), tape.constant(to_tensor(j2d)), p)
      .value()
      .item();
}

double uncertainty_loss(const Pose3D& current, const GaussianPosePrediction& anchor) {
  ad::Tape tape;
  return uncertainty_loss(tape.constant(to_tensor(current)), anchor).value().item();
}

LossBreakdown combined_loss(const Pose3D& current3d, const Pose2D& j2d, const ProjectionMatrix& p,
                            const GaussianPosePrediction& anchor, double lambda_projection,
                            double lambda_uncertainty) {
  ad::Tape tape;
  return combined_loss(tape.constant(to_tensor(current3d)), tape.constant(to_tensor(j2d)), p, anchor,
                       lambda_projection, lambda_uncertainty)
      .values;
}

}  // namespace uaopose
