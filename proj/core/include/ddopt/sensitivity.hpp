#pragma once

#include <Eigen/Core>

#include "ddopt/dynamics.hpp"

namespace ddopt {

enum class SensitivitySource { implicit, analytic, finite_difference };

// Derivative of the steady state with respect to the decision, stored as an
// n x m matrix: row j holds d(steady state)/d(u_j). Applying it to a
// state-gradient yields the anticipation term of the composite gradient.
struct SensitivityMatrix {
  Eigen::MatrixXd H;
  SensitivitySource source = SensitivitySource::implicit;
};

// Implicit-function form -grad_u f . [grad_p f - I]^{-1} evaluated at a
// verified fixed point, with the model's analytic Jacobians.
SensitivityMatrix sensitivity_implicit(const DynamicsModel& model,
                                       const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& d,
                                       const Eigen::VectorXd& p_ss);

// Closed form for the polarized variant. Evaluating at the true steady state
// gives the exact sensitivity; evaluating at the current position gives the
// online approximation used inside the composite algorithm. p_tilde_norm is
// the norm of the pre-normalization intermediate at p.
SensitivityMatrix sensitivity_polarized(const Eigen::VectorXd& q,
                                        const Eigen::VectorXd& p,
                                        double p_tilde_norm, double lambda,
                                        double sigma);

// Closed form for the softmax variant; independent of the state.
SensitivityMatrix sensitivity_softmax(const Eigen::VectorXd& q, double lambda1,
                                      double lambda2, double epsilon);

// Central differences of the steady state, column by column of the decision.
// Steady-state tolerance is tightened to keep fixed-point noise below the
// truncation error.
SensitivityMatrix sensitivity_fd_oracle(const DynamicsModel& model,
                                        const Eigen::VectorXd& u,
                                        const Eigen::VectorXd& d,
                                        double h_step = 1e-5);

}  // namespace ddopt
