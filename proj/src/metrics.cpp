#include "uaopose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uaopose/errors.hpp"

namespace uaopose {

namespace {

void same_k(const char* op, const Pose3D& a, const Pose3D& b) {
  if (a.rows() != b.rows())
    throw ShapeError(std::string(op) + ": K mismatch (" + std::to_string(a.rows()) + " vs " +
                     std::to_string(b.rows()) + ")");
  if (a.rows() == 0) throw ShapeError(std::string(op) + ": empty pose");
}

Eigen::VectorXd ranks(const Eigen::VectorXd& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x(static_cast<Eigen::Index>(a)) < x(static_cast<Eigen::Index>(b));
  });
  Eigen::VectorXd r(x.size());
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x(static_cast<Eigen::Index>(order[j + 1])) == x(static_cast<Eigen::Index>(order[i])))
      ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r(static_cast<Eigen::Index>(order[k])) = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

Eigen::VectorXd joint_errors_mm(const Pose3D& pred, const Pose3D& gt) {
  same_k("joint_errors_mm", pred, gt);
  return (pred - gt).rowwise().norm() * 1000.0;
}

double mpjpe_mm(const Pose3D& pred, const Pose3D& gt) { return joint_errors_mm(pred, gt).mean(); }

Pose3D procrustes_align(const Pose3D& pred, const Pose3D& gt) {
  same_k("procrustes_align", pred, gt);
  const Eigen::RowVector3d mu_p = pred.colwise().mean();
  const Eigen::RowVector3d mu_g = gt.colwise().mean();
  const Eigen::MatrixXd x = pred.rowwise() - mu_p;
  const Eigen::MatrixXd y = gt.rowwise() - mu_g;
  if (y.squaredNorm() < 1e-24) throw AlignmentError("procrustes_align: ground-truth joints coincide");
  const double xx = x.squaredNorm();
  Pose3D aligned(pred.rows(), 3);
  if (xx < 1e-300) {
    aligned.rowwise() = mu_g;
    return aligned;
  }

  // Rotation R maximizing tr(R^T Y^T X), restricted to det(R) = +1.
  const Eigen::Matrix3d m = y.transpose() * x;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d(1.0, 1.0, 1.0);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2) = -1.0;
  const Eigen::Matrix3d r = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const double scale = svd.singularValues().dot(d) / xx;

  aligned = (scale * (x * r.transpose())).rowwise() + mu_g;
  return aligned;
}

double pa_mpjpe_mm(const Pose3D& pred, const Pose3D& gt) {
  return mpjpe_mm(procrustes_align(pred, gt), gt);
}

double pck(const Pose3D& pred, const Pose3D& gt, double threshold_mm) {
  const Eigen::VectorXd e = joint_errors_mm(pred, gt);
  const auto hits = std::count_if(e.begin(), e.end(), [&](double v) { return v < threshold_mm; });
  return 100.0 * static_cast<double>(hits) / static_cast<double>(e.size());
}

std::vector<double> auc_thresholds_mm() {
  std::vector<double> t(31);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 5.0 * static_cast<double>(i);
  return t;
}

double auc(const Pose3D& pred, const Pose3D& gt) {
  const Eigen::VectorXd e = joint_errors_mm(pred, gt);
  const auto thresholds = auc_thresholds_mm();
  double total = 0.0;
  for (double t : thresholds) {
    const auto hits = std::count_if(e.begin(), e.end(), [&](double v) { return v < t; });
    total += 100.0 * static_cast<double>(hits) / static_cast<double>(e.size());
  }
  return total / static_cast<double>(thresholds.size());
}

RankCorrelation spearman(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw ShapeError("spearman: length mismatch");
  RankCorrelation out;
  if (a.size() < 2) {
    out.degenerate = true;
    return out;
  }
  const Eigen::VectorXd ra = ranks(a).array() - ranks(a).mean();
  const Eigen::VectorXd rb = ranks(b).array() - ranks(b).mean();
  const double den = std::sqrt(ra.squaredNorm() * rb.squaredNorm());
  if (!(den > 0.0)) {
    out.degenerate = true;
    return out;
  }
  out.value = std::clamp(ra.dot(rb) / den, -1.0, 1.0);
  return out;
}

CalibrationStats calibration_stats(const std::vector<GaussianPosePrediction>& preds,
                                   const std::vector<Pose3D>& gts) {
  if (preds.empty()) throw ContractError("calibration_stats: empty input");
  if (preds.size() != gts.size()) throw ShapeError("calibration_stats: list lengths differ");
  const Eigen::Index k = gts.front().rows();
  CalibrationStats out;
  out.per_joint_mean_s = Eigen::VectorXd::Zero(k);
  out.per_joint_mpjpe_mm = Eigen::VectorXd::Zero(k);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].s.size() != k) throw ShapeError("calibration_stats: log-variance has the wrong K");
    out.per_joint_mean_s += preds[i].s;
    out.per_joint_mpjpe_mm += joint_errors_mm(preds[i].mu, gts[i]);
  }
  const double n = static_cast<double>(preds.size());
  out.per_joint_mean_s /= n;
  out.per_joint_mpjpe_mm /= n;
  out.spearman = spearman(out.per_joint_mean_s, out.per_joint_mpjpe_mm);
  return out;
}

EvalReport evaluate(const std::vector<GaussianPosePrediction>& preds, const std::vector<Pose3D>& gts) {
  const CalibrationStats cal = calibration_stats(preds, gts);
  EvalReport r;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    r.mpjpe_mm += mpjpe_mm(preds[i].mu, gts[i]);
    r.pa_mpjpe_mm += pa_mpjpe_mm(preds[i].mu, gts[i]);
    r.pck_150 += pck(preds[i].mu, gts[i]);
    r.auc += auc(preds[i].mu, gts[i]);
  }
  const double n = static_cast<double>(preds.size());
  r.mpjpe_mm /= n;
  r.pa_mpjpe_mm /= n;
  r.pck_150 /= n;
  r.auc /= n;
  r.per_joint_mpjpe_mm.assign(cal.per_joint_mpjpe_mm.begin(), cal.per_joint_mpjpe_mm.end());
  r.per_joint_mean_s.assign(cal.per_joint_mean_s.begin(), cal.per_joint_mean_s.end());
  r.spearman_s_vs_error = cal.spearman.value;
  r.spearman_degenerate = cal.spearman.degenerate;
  return r;
}

}  // namespace uaopose
