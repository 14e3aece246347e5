#include "qcap/lip.hpp"

#include <cmath>
#include <stdexcept>

namespace qcap::lip {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void LipParams::validate() const {
  if (!(height > 0.0) || !(gravity > 0.0) || !(dt > 0.0) || period_steps < 1)
    throw std::invalid_argument("LipParams: height, gravity, dt must be positive and period_steps >= 1");
}

double LipParams::omega() const { return std::sqrt(gravity / height); }

GaitSchedule::GaitSchedule(std::string name, std::vector<Contacts> contacts)
    : name_(std::move(name)), contacts_(std::move(contacts)) {
  if (contacts_.empty()) throw std::invalid_argument("GaitSchedule: empty period");
  for (const auto& c : contacts_) {
    bool any = false;
    for (bool b : c) any = any || b;
    if (!any) throw std::invalid_argument("GaitSchedule: phase without stance leg");
  }
}

namespace {

GaitSchedule two_beat(const std::string& name, int period, Contacts first, Contacts second) {
  if (period < 1) throw std::invalid_argument("GaitSchedule: period must be >= 1");
  std::vector<Contacts> c(static_cast<size_t>(period));
  const int half = (period + 1) / 2;
  for (int k = 0; k < period; ++k) c[static_cast<size_t>(k)] = k < half ? first : second;
  return GaitSchedule(name, std::move(c));
}

}  // namespace

GaitSchedule GaitSchedule::trot(int n) { return two_beat("trot", n, {true, false, true, false}, {false, true, false, true}); }
GaitSchedule GaitSchedule::bound(int n) { return two_beat("bound", n, {true, true, false, false}, {false, false, true, true}); }
GaitSchedule GaitSchedule::pace(int n) { return two_beat("pace", n, {true, false, false, true}, {false, true, true, false}); }
GaitSchedule GaitSchedule::stand(int n) { return two_beat("stand", n, {true, true, true, true}, {true, true, true, true}); }

GaitSchedule GaitSchedule::by_name(const std::string& name, int n, int phase_offset) {
  if (name == "trot") return trot(n).rotated(phase_offset);
  if (name == "bound") return bound(n).rotated(phase_offset);
  if (name == "pace") return pace(n).rotated(phase_offset);
  if (name == "stand") return stand(n).rotated(phase_offset);
  throw std::invalid_argument("unknown gait '" + name + "'");
}

GaitSchedule GaitSchedule::rotated(int offset) const {
  std::vector<Contacts> c;
  for (int k = 0; k < period(); ++k) c.push_back(contacts(k + offset));
  return GaitSchedule(name_, std::move(c));
}

const Contacts& GaitSchedule::contacts(int k) const {
  const int n = period();
  return contacts_[static_cast<size_t>(((k % n) + n) % n)];
}

std::vector<int> GaitSchedule::stance_legs(int k) const {
  std::vector<int> out;
  const Contacts& c = contacts(k);
  for (int i = 0; i < kNumLegs; ++i)
    if (c[static_cast<size_t>(i)]) out.push_back(i);
  return out;
}

std::vector<int> GaitSchedule::touchdown_legs(int k) const {
  std::vector<int> out;
  const Contacts& now = contacts(k);
  const Contacts& before = contacts(k - 1);
  for (int i = 0; i < kNumLegs; ++i)
    if (now[static_cast<size_t>(i)] && !before[static_cast<size_t>(i)]) out.push_back(i);
  return out;
}

bool GaitSchedule::is_touchdown(int k) const { return !touchdown_legs(k).empty(); }

Footsteps nominal_footsteps() {
  Footsteps w;
  w << 0.19, 0.19, -0.19, -0.19,  //
      -0.11, 0.11, 0.11, -0.11;
  return w;
}

ContinuousLip build_continuous(const LipParams& p) {
  p.validate();
  const double w2 = p.gravity / p.height;
  ContinuousLip c;
  c.A.setZero();
  c.B.setZero();
  for (int axis = 0; axis < 2; ++axis) {
    const int r = 2 * axis;
    c.A(r, r + 1) = 1.0;
    c.A(r + 1, r) = w2;
    c.B(r + 1, axis) = -w2;
  }
  return c;
}

MatrixXd expm(const MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("expm: matrix must be square");
  const double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
  int s = 0;
  if (norm > 0.5) s = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const MatrixXd X = M / std::ldexp(1.0, s);
  MatrixXd E = MatrixXd::Identity(M.rows(), M.cols());
  MatrixXd term = E;
  for (int k = 1; k < 40; ++k) {
    term = term * X / static_cast<double>(k);
    E += term;
    if (term.cwiseAbs().maxCoeff() < 1e-18 * E.cwiseAbs().maxCoeff()) break;
  }
  for (int i = 0; i < s; ++i) E = E * E;
  return E;
}

DiscreteLip discretize(const ContinuousLip& c, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize: dt must be positive");
  DiscreteLip d;
  d.A = expm(c.A * dt);
  Eigen::FullPivLU<Matrix4d> lu(c.A);
  if (!lu.isInvertible()) throw std::domain_error("discretize: singular continuous state matrix");
  d.B = lu.solve((d.A - Matrix4d::Identity()) * c.B);
  return d;
}

DiscreteLip discretize_closed_form(const LipParams& p) {
  p.validate();
  const double w = p.omega();
  const double ch = std::cosh(w * p.dt);
  const double sh = std::sinh(w * p.dt);
  DiscreteLip d;
  d.A.setZero();
  d.B.setZero();
  for (int axis = 0; axis < 2; ++axis) {
    const int r = 2 * axis;
    d.A(r, r) = ch;
    d.A(r, r + 1) = sh / w;
    d.A(r + 1, r) = w * sh;
    d.A(r + 1, r + 1) = ch;
    d.B(r, axis) = 1.0 - ch;
    d.B(r + 1, axis) = -w * sh;
  }
  return d;
}

Vector2d icp(const Vector4d& x, const LipParams& p) {
  const double k = std::sqrt(p.height / p.gravity);
  return Vector2d(x(kCx) + k * x(kVx), x(kCy) + k * x(kVy));
}

const std::vector<VectorXd>& PhaseDynamics::phase_effects(int k) const {
  const int n = period();
  return effects[static_cast<size_t>(((k % n) + n) % n)];
}

LiftedSystem lift_period(const PhaseDynamics& dyn) {
  const int n = dyn.dim();
  const int T = dyn.period();
  LiftedSystem out;
  int cols = 0;
  for (const auto& e : dyn.effects) {
    out.block_sizes.push_back(static_cast<int>(e.size()));
    cols += static_cast<int>(e.size());
  }
  out.B_bar = MatrixXd::Zero(n, cols);
  // Columns for phase k are A^{T-1-k} times that phase's effect vertices.
  MatrixXd power = MatrixXd::Identity(n, n);
  int col = cols;
  for (int k = T - 1; k >= 0; --k) {
    const auto& e = dyn.effects[static_cast<size_t>(k)];
    col -= static_cast<int>(e.size());
    for (size_t j = 0; j < e.size(); ++j) out.B_bar.col(col + static_cast<int>(j)) = power * e[j];
    power = power * dyn.A;
  }
  out.A_bar = power;
  return out;
}

SwitchedLipSystem::SwitchedLipSystem(LipParams params, GaitSchedule schedule, Footsteps footsteps)
    : params_(params), schedule_(std::move(schedule)), footsteps_(footsteps) {
  params_.validate();
  if (schedule_.period() != params_.period_steps)
    throw std::invalid_argument("SwitchedLipSystem: schedule period differs from period_steps");
  const DiscreteLip d = discretize(build_continuous(params_), params_.dt);
  A_ = d.A;
  B_ = d.B;
}

VPolytope SwitchedLipSystem::input_set(int k) const { return input_set(k, footsteps_); }

VPolytope SwitchedLipSystem::input_set(int k, const Footsteps& w) const {
  VPolytope v;
  for (int leg : schedule_.stance_legs(k)) v.vertices.push_back(w.col(leg));
  return v;
}

SwitchedLipSystem SwitchedLipSystem::with_footsteps(const Footsteps& w) const {
  return SwitchedLipSystem(params_, schedule_, w);
}

PhaseDynamics SwitchedLipSystem::phase_dynamics() const {
  PhaseDynamics dyn;
  dyn.A = A_;
  for (int k = 0; k < period(); ++k) {
    std::vector<VectorXd> e;
    for (const auto& p : input_set(k).vertices) e.push_back(B_ * p);
    dyn.effects.push_back(std::move(e));
  }
  return dyn;
}

Vector4d SwitchedLipSystem::step(const Vector4d& x, int k, const VectorXd& lambda) const {
  return step(x, k, lambda, footsteps_);
}

Vector4d SwitchedLipSystem::step(const Vector4d& x, int k, const VectorXd& lambda, const Footsteps& w) const {
  const std::vector<int> legs = schedule_.stance_legs(k);
  if (lambda.size() != static_cast<Eigen::Index>(legs.size()))
    throw std::invalid_argument("step: weight count differs from stance leg count");
  Vector2d cop = Vector2d::Zero();
  for (size_t i = 0; i < legs.size(); ++i) cop += lambda(static_cast<Eigen::Index>(i)) * w.col(legs[i]);
  return A_ * x + B_ * cop;
}

PhaseDynamics single_axis_dynamics(const LipParams& p, const std::vector<std::vector<double>>& stance_positions) {
  p.validate();
  const double w = p.omega();
  const double ch = std::cosh(w * p.dt);
  const double sh = std::sinh(w * p.dt);
  PhaseDynamics dyn;
  dyn.A.resize(2, 2);
  dyn.A << ch, sh / w, w * sh, ch;
  const Eigen::Vector2d b(1.0 - ch, -w * sh);
  for (const auto& phase : stance_positions) {
    if (phase.empty()) throw std::invalid_argument("single_axis_dynamics: phase without stance position");
    std::vector<VectorXd> e;
    for (double q : phase) e.push_back(b * q);
    dyn.effects.push_back(std::move(e));
  }
  return dyn;
}

Vector4d planar_shift(const Vector2d& dw) { return Vector4d(dw(0), 0.0, dw(1), 0.0); }

}  // namespace qcap::lip
