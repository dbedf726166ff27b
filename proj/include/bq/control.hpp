#pragma once

#include "bq/dynamics.hpp"
#include "bq/lagrangian.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace bq {

// f(t) = K exp(-1/(s(1-s))), s = (t - t0)/(t1 - t0), K fixed so that int f = integral.
class Bump {
 public:
  Bump() = default;
  Bump(double t0, double t1, double integral);
  double t0() const { return t0_; }
  double t1() const { return t1_; }
  double integral() const { return integral_; }
  double f(double t) const { return eval(t, 0); }
  double df(double t) const { return eval(t, 1); }
  double d2f(double t) const { return eval(t, 2); }
  // integral of the unit profile exp(-1/(s(1-s))) over (0,1)
  static double unit_integral();

 private:
  double eval(double t, int order) const;
  double t0_ = 0.0, t1_ = 1.0, integral_ = 0.0, K_ = 0.0;
};

enum class StageKind { shear_x1, shear_x2, cellular, cellular_matrix };
std::string to_string(StageKind k);
StageKind stage_kind_from_string(const std::string& s);

// Velocity f(t) V(x) with
//   shear_x1:        V = (cos(x2-b), 0)
//   shear_x2:        V = (0, cos(x1-a))
//   cellular:        V = (-sin(x2-b), sin(x1-a))   rotation about (a,b)
//   cellular_matrix: V = (sin(x2-b), sin(x1-a))    saddle at (a,b)
struct ControlStage {
  StageKind kind;
  Bump bump;
  double a = 0.0, b = 0.0;
};

struct ControlPlan {
  std::string label;
  std::vector<ControlStage> stages;
  double horizon = 1.0;
  Vec2 x0 = Vec2::Zero(), x_target = Vec2::Zero();
  Vec2 v0 = Vec2(1, 0), v_target = Vec2(1, 0);
  double matrix_target = 1.0;  // M for matrix plans
  bool has_direction = false, has_matrix = false;
};

// Shortest signed representative of b - a on the circle, in (-pi, pi].
double circle_delta(double a, double b);
// Signed rotation from u to v in (-pi, pi].
double signed_angle(const Vec2& u, const Vec2& v);

ControlPlan build_position_plan(const Vec2& x0, const Vec2& target, const PhysicalParams& p);
// Cellular stage on (1/2, 1) rotating v_mid to target about position.
ControlPlan build_direction_plan(const Vec2& v_mid, const Vec2& target, const Vec2& position, const PhysicalParams& p);
// Position stages followed by the direction stage.
ControlPlan build_steering_plan(const Vec2& x0, const Vec2& x_target, const Vec2& v0, const Vec2& v_target,
                                const PhysicalParams& p);
// Saddle stage on (0, 1) with int f = log M.
ControlPlan build_matrix_plan(double M, const Vec2& position, const PhysicalParams& p);

// Closed-form state theta = theta_p + x1 q at time t and its time derivative.
struct ClosedForm {
  AugmentedState state, rate;
  ControlForcing h;
};
ClosedForm closed_form(const ControlPlan& plan, double t, int n, const PhysicalParams& p);
ControlForcing plan_forcing(const ControlPlan& plan, double t, int n, const PhysicalParams& p);
// Max coefficient of the controlled-system residual of the closed form at t.
double closed_form_residual(const ControlPlan& plan, double t, int n, const PhysicalParams& p);

struct SteeringOptions {
  int n = 32;
  double dt = 1e-4;
  int substitution_samples = 10;
  std::uint64_t seed = 1;
  int checkpoint_every = 100;
};

struct SteeringReport {
  double position_error = 0.0;
  double angle_error = 0.0;
  double matrix_norm = 0.0;
  double matrix_det_error = 0.0;
  double pde_residual = 0.0;     // closed-form substitution
  double tracking_error = 0.0;   // simulated vs closed form, max coefficient
  double state_return = 0.0;     // ||U(horizon)|| in the weighted norm, x1-linear part included
  double identity_error = 0.0;   // max |A - I| over the position stages
  double shear_b_omega = 0.0;    // max omega part of B(U,U) of the closed form at shear checkpoints
  double cell_center_drift = 0.0;
  double seam_jump = 0.0;        // 2 pi max |q|: jump of the covering-space temperature across x1 = 0
  ExtendedState final_particle;
  int steps = 0;
};

SteeringReport verify_steering(const ControlPlan& plan, const PhysicalParams& p, const SteeringOptions& opt = {});

// Endpoint deviation when the plan's forcing is multiplied by (1 + eps).
double forcing_sensitivity(const ControlPlan& plan, const PhysicalParams& p, double eps,
                           const SteeringOptions& opt = {});

nlohmann::json to_json(const ControlPlan& plan);
ControlPlan plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SteeringReport& r);

}  // namespace bq
