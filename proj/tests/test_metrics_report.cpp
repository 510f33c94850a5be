#include <gtest/gtest.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "procrustes_oracle.hpp"
#include "uaopose/errors.hpp"
#include "uaopose/metrics.hpp"
#include "uaopose/objectives.hpp"
#include "uaopose/report.hpp"

using namespace uaopose;

namespace {

Pose3D random_pose(Eigen::Index k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Pose3D p(k, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)).normalized().toRotationMatrix();
}

std::vector<double> average_ranks(const Eigen::VectorXd& v) {
  std::vector<double> r(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      less += v(j) < v(i) ? 1 : 0;
      equal += v(j) == v(i) ? 1 : 0;
    }
    r[i] = less + (equal + 1) / 2.0;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void expect_well_formed_svg(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  EXPECT_NO_THROW(boost::property_tree::read_xml(in, tree)) << text.substr(0, 200);
  EXPECT_EQ(tree.count("svg"), 1u);
}

EvalReport sample_report() {
  EvalReport r;
  r.mpjpe_mm = 41.123456789012345;
  r.pa_mpjpe_mm = 30.5;
  r.pck_150 = 97.05882352941177;
  r.auc = 61.1;
  for (int k = 0; k < 17; ++k) {
    r.per_joint_mpjpe_mm.push_back(10.0 + 1.0 / (k + 3));
    r.per_joint_mean_s.push_back(-6.0 + 0.1 * k);
  }
  r.spearman_s_vs_error = 0.8112745098039216;
  return r;
}

}  // namespace

TEST(Mpjpe, UnitsAndSharedDefinition) {
  std::mt19937_64 rng(1);
  const Pose3D a = random_pose(17, rng);
  EXPECT_EQ(mpjpe_mm(a, a), 0.0);
  EXPECT_NEAR(mpjpe_mm(a.array() + 0.01 / std::sqrt(3.0), a), 10.0, 1e-12);
  for (int i = 0; i < 20; ++i) {
    const Pose3D b = random_pose(17, rng), c = random_pose(17, rng);
    EXPECT_NEAR(mpjpe_mm(b, c), 1000.0 * mpjpe_loss(b, c), 1e-9);
  }
  EXPECT_THROW(mpjpe_mm(random_pose(3, rng), random_pose(4, rng)), ShapeError);
}

TEST(Procrustes, IdentityAndSimilarityInvariance) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Pose3D gt = random_pose(17, rng);
    EXPECT_LT((procrustes_align(gt, gt) - gt).cwiseAbs().maxCoeff(), 1e-12);
    const Eigen::Matrix3d r = random_rotation(rng);
    const Eigen::RowVector3d t(0.3, -0.2, 1.1);
    const Pose3D moved = ((2.0 * gt) * r.transpose()).rowwise() + t;
    EXPECT_LT(pa_mpjpe_mm(moved, gt), 1e-9);

    const Pose3D pred = random_pose(17, rng);
    const double base = pa_mpjpe_mm(pred, gt);
    const double s = 0.5 + (i % 5) * 0.3;
    const Pose3D pm = ((s * pred) * random_rotation(rng).transpose()).rowwise() + t;
    EXPECT_NEAR(pa_mpjpe_mm(pm, gt), base, 1e-9);
    EXPECT_LE(base, mpjpe_mm(pred, gt) + 1e-9);
    // Idempotence.
    EXPECT_NEAR(pa_mpjpe_mm(procrustes_align(pred, gt), gt), base, 1e-9);
  }
}

TEST(Procrustes, MatchesBruteForceOnK4) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const Pose3D gt = random_pose(4, rng), pred = random_pose(4, rng);
    const oracle::BruteFit bf = oracle::brute_force_align(pred, gt, rng);
    const Pose3D fast = procrustes_align(pred, gt);
    EXPECT_LE((fast - gt).squaredNorm(), bf.sse + 1e-12);
    EXPECT_LT((fast - bf.aligned).cwiseAbs().maxCoeff(), 1e-6) << "case " << i;
  }
}

TEST(Procrustes, ExcludesReflections) {
  std::mt19937_64 rng(4);
  const Pose3D gt = random_pose(17, rng);
  Pose3D mirror = gt;
  mirror.col(0) *= -1.0;
  // A mirror image can only be matched exactly by a reflection.
  EXPECT_GT(pa_mpjpe_mm(mirror, gt), 1.0);
  EXPECT_GE((procrustes_align(mirror, gt) - gt).squaredNorm(), 1e-6);
}

TEST(Procrustes, DegenerateInputs) {
  std::mt19937_64 rng(5);
  const Pose3D pred = random_pose(17, rng);
  Pose3D flat = Pose3D::Zero(17, 3);
  flat.rowwise() += Eigen::RowVector3d(0.1, 0.2, 0.3);
  EXPECT_THROW(procrustes_align(pred, flat), AlignmentError);
  const Pose3D gt = random_pose(17, rng);
  const Pose3D out = procrustes_align(flat, gt);
  for (Eigen::Index k = 0; k < 17; ++k)
    EXPECT_LT((out.row(k) - gt.colwise().mean()).norm(), 1e-12);
}

TEST(Pck, Examples) {
  std::mt19937_64 rng(6);
  const Pose3D gt = random_pose(4, rng);
  EXPECT_EQ(pck(gt, gt), 100.0);
  Pose3D half = gt;
  half(0, 0) += 0.2;
  half(1, 1) += 0.3;
  EXPECT_EQ(pck(half, gt), 50.0);
  Pose3D edge = Pose3D::Zero(2, 3);
  edge(0, 0) = 0.15;  // exactly 150 mm
  EXPECT_EQ(pck(edge, Pose3D::Zero(2, 3)), 50.0);
  EXPECT_EQ(pck(edge, Pose3D::Zero(2, 3), 150.0 + 1e-9), 100.0);
}

TEST(Auc, Examples) {
  std::mt19937_64 rng(7);
  const Pose3D gt = random_pose(17, rng);
  EXPECT_NEAR(auc(gt, gt), 100.0 * 30.0 / 31.0, 1e-12);
  EXPECT_NEAR(auc(gt, gt), 96.77, 5e-3);
  EXPECT_EQ(auc(gt.array() + 0.2, gt), 0.0);
  const auto th = auc_thresholds_mm();
  ASSERT_EQ(th.size(), 31u);
  EXPECT_EQ(th.front(), 0.0);
  EXPECT_EQ(th.back(), 150.0);
  for (int i = 0; i < 50; ++i) {
    const Pose3D p = gt + 0.08 * random_pose(17, rng);
    double mean = 0.0;
    for (double t : th) mean += pck(p, gt, t) / 31.0;
    EXPECT_NEAR(auc(p, gt), mean, 1e-12);
    EXPECT_LE(auc(p, gt), pck(p, gt) + 1e-12);
  }
}

TEST(Spearman, AgainstRankOracle) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd a(17), b(17);
    for (int i = 0; i < 17; ++i) {
      a(i) = small(rng);  // plenty of ties
      b(i) = 0.5 * a(i) + small(rng);
    }
    const RankCorrelation r = spearman(a, b);
    EXPECT_FALSE(r.degenerate);
    EXPECT_NEAR(r.value, pearson(average_ranks(a), average_ranks(b)), 1e-12);
    EXPECT_LE(std::abs(r.value), 1.0);
  }
  Eigen::VectorXd x(5), y(5);
  x << 1, 2, 3, 4, 5;
  y << 10, 20, 30, 40, 1000;
  EXPECT_NEAR(spearman(x, y).value, 1.0, 1e-15);
  EXPECT_NEAR(spearman(x, -y).value, -1.0, 1e-15);
  const RankCorrelation d = spearman(Eigen::VectorXd::Constant(5, 2.0), y);
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.value, 0.0);
  EXPECT_THROW(spearman(x, Eigen::VectorXd(4)), ShapeError);
}

TEST(Calibration, OrderingAndDegeneracy) {
  std::mt19937_64 rng(9);
  std::vector<GaussianPosePrediction> preds;
  std::vector<Pose3D> gts;
  for (int n = 0; n < 5; ++n) {
    const Pose3D gt = random_pose(17, rng);
    GaussianPosePrediction p;
    p.mu = gt;
    p.s.resize(17);
    for (int k = 0; k < 17; ++k) {
      p.mu(k, 0) += 0.001 * (k + 1);  // error grows with k
      p.s(k) = -8.0 + 0.2 * k;         // and so does s
    }
    preds.push_back(p);
    gts.push_back(gt);
  }
  const CalibrationStats c = calibration_stats(preds, gts);
  EXPECT_NEAR(c.spearman.value, 1.0, 1e-15);
  EXPECT_NEAR(c.per_joint_mpjpe_mm(4), 5.0, 1e-9);
  EXPECT_NEAR(c.per_joint_mean_s(4), -7.2, 1e-12);

  for (auto& p : preds) p.s.setConstant(-3.0);
  const CalibrationStats flat = calibration_stats(preds, gts);
  EXPECT_TRUE(flat.spearman.degenerate);
  EXPECT_EQ(flat.spearman.value, 0.0);
  EXPECT_THROW(calibration_stats({}, {}), ContractError);
}

TEST(Evaluate, GroundTruthAgainstItself) {
  std::mt19937_64 rng(10);
  std::vector<GaussianPosePrediction> preds;
  std::vector<Pose3D> gts;
  for (int n = 0; n < 8; ++n) {
    const Pose3D gt = random_pose(17, rng);
    preds.push_back({gt, Eigen::VectorXd::Zero(17)});
    gts.push_back(gt);
  }
  const EvalReport r = evaluate(preds, gts);
  EXPECT_EQ(r.mpjpe_mm, 0.0);
  EXPECT_LT(r.pa_mpjpe_mm, 1e-9);
  EXPECT_EQ(r.pck_150, 100.0);
  EXPECT_NEAR(r.auc, 100.0 * 30.0 / 31.0, 1e-12);
  EXPECT_EQ(r.per_joint_mpjpe_mm.size(), 17u);
  EXPECT_TRUE(r.spearman_degenerate);
}

TEST(Evaluate, AveragesPerPoseMetrics) {
  std::mt19937_64 rng(11);
  std::vector<GaussianPosePrediction> preds;
  std::vector<Pose3D> gts;
  double mp = 0, pa = 0;
  for (int n = 0; n < 6; ++n) {
    const Pose3D gt = random_pose(17, rng);
    const Pose3D p = gt + 0.1 * random_pose(17, rng);
    preds.push_back({p, Eigen::VectorXd::Zero(17)});
    gts.push_back(gt);
    mp += mpjpe_mm(p, gt) / 6;
    pa += pa_mpjpe_mm(p, gt) / 6;
  }
  const EvalReport r = evaluate(preds, gts);
  EXPECT_NEAR(r.mpjpe_mm, mp, 1e-9);
  EXPECT_NEAR(r.pa_mpjpe_mm, pa, 1e-9);
  EXPECT_GE(r.pck_150, 0.0);
  EXPECT_LE(r.pck_150, 100.0);
}

TEST(Report, JsonRoundTrip) {
  const EvalReport r = sample_report();
  const std::string text = report_to_json(r);
  EXPECT_EQ(report_from_json(text), r);
  for (const char* field : {"\"mpjpe_mm\"", "\"pa_mpjpe_mm\"", "\"pck_150\"", "\"auc\"", "\"per_joint_mpjpe_mm\"",
                            "\"per_joint_mean_s\"", "\"spearman_s_vs_error\""})
    EXPECT_NE(text.find(field), std::string::npos) << field;
  EXPECT_THROW(report_from_json("{}"), ParseError);
  EXPECT_THROW(report_from_json("[1,2"), ParseError);
  EXPECT_THROW(report_from_json(R"({"mpjpe_mm": "x"})"), ParseError);
}

TEST(Report, MeanCurves) {
  OptimizationTrace a, b;
  for (int t = 0; t <= 5; ++t) {
    a.records.push_back({1.0 * t, 2.0, 3.0, 10.0 * t});
    b.records.push_back({3.0 * t, 4.0, 5.0, 20.0});
  }
  const auto rows = mean_curves({a, b});
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[3].mean_projection, 6.0);
  EXPECT_EQ(rows[3].mean_uncertainty, 3.0);
  EXPECT_EQ(rows[3].mean_total, 4.0);
  EXPECT_EQ(*rows[3].mean_mpjpe_mm, 25.0);
  const std::string csv = curves_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,mean_proj,mean_unc,mean_total,mean_mpjpe_mm");

  b.records[2].mpjpe_mm.reset();
  EXPECT_FALSE(mean_curves({a, b})[2].mean_mpjpe_mm.has_value());
  b.records.pop_back();
  EXPECT_THROW(mean_curves({a, b}), ShapeError);
}

TEST(Report, SvgWellFormed) {
  std::vector<CurveRow> rows;
  for (int t = 0; t <= 200; ++t) rows.push_back({1.0 / (t + 1), 0.1, 0.2, 40.0 + std::sin(t * 0.1)});
  expect_well_formed_svg(error_curve_svg(rows));
  rows.assign(1, CurveRow{0.5, 0.0, 0.5, std::nullopt});
  expect_well_formed_svg(error_curve_svg(rows));
  std::vector<std::string> names(17, "a<b>&\"c\"");
  expect_well_formed_svg(joint_bars_svg(sample_report(), names));
  expect_well_formed_svg(joint_bars_svg(sample_report()));
}

TEST(Report, EmitWritesAllFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "uaopose_test_report" / "nested";
  std::filesystem::remove_all(dir.parent_path());
  std::vector<OptimizationTrace> traces(3);
  for (auto& t : traces)
    for (int i = 0; i <= 5; ++i) t.records.push_back({0.1, 0.2, 0.3, 40.0});
  emit_report(sample_report(), traces, dir.string());
  EXPECT_EQ(report_from_json(slurp(dir / "report.json")), sample_report());
  const std::string csv = slurp(dir / "curves.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 6);
  expect_well_formed_svg(slurp(dir / "error_curve.svg"));
  expect_well_formed_svg(slurp(dir / "joint_uncertainty.svg"));
  std::filesystem::remove_all(dir.parent_path());

  const auto blocker = std::filesystem::temp_directory_path() / "uaopose_test_blocker";
  std::ofstream(blocker) << "x";
  EXPECT_THROW(emit_report(sample_report(), traces, (blocker / "sub").string()), IoError);
  std::filesystem::remove(blocker);
}
