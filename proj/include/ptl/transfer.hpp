#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ptl/core.hpp"
#include "ptl/dictlearn.hpp"
#include "ptl/genmodel.hpp"
#include "ptl/lasso.hpp"

namespace ptl {

enum class LossKind {
  Absolute,  // |y - z|
  Hinge,     // max(0, 1 - y z), labels in {-1, +1}
  Squared,   // (y - z)^2 / 2, Lipschitz only on a bounded range of z
};

struct Loss {
  LossKind kind = LossKind::Absolute;
  double lipschitz = 1.0;

  static Loss absolute() { return {LossKind::Absolute, 1.0}; }
  static Loss hinge() { return {LossKind::Hinge, 1.0}; }
  /// The caller supplies the Lipschitz constant valid on the range of
  /// predictions and labels it expects.
  static Loss squared(double lipschitz) { return {LossKind::Squared, lipschitz}; }

  double operator()(double y, double z) const;
};

const char* loss_name(LossKind kind);
LossKind parse_loss(const std::string& name);  // throws ArgumentError

struct TransferConfig {
  Loss loss;
  double lambda = 0.0;
  double R_x = 1.0;  // radius of the sample space
  double R_W = 1.0;
  double R_psi = 0.0;
  double R_r = 0.0;
  double delta = 0.1;
  double delta_bar = 0.0;
  std::size_t n = 0;
  std::size_t N = 0;
  double rho = 0.0;
  bool auto_rho = true;

  /// Throws ArgumentError naming the first offending field.
  void validate() const;
};

/// Fills R_psi = R_x^2 / (2 lambda), R_r = R_W^2 / 2 and the automatic rho.
TransferConfig make_transfer_config(Loss loss, double lambda, double R_x, double R_W,
                                    double delta, std::size_t n, std::size_t N = 0,
                                    double delta_bar = 0.0);

/// L R_psi sqrt(8 (32 + log(2/delta)) / (R_r n)).
double rho_auto(double L, double R_psi, double R_r, std::size_t n, double delta);

struct LabeledSample {
  Vector x;
  double y = 0.0;
};

Vector feature_map(const Dictionary& dict, const Vector& x, double lambda,
                   const LassoOptions& options = {});

/// One feature column per sample.
Matrix feature_matrix(const Dictionary& dict, const std::vector<LabeledSample>& data,
                      double lambda, const LassoOptions& options = {});

struct ErmOptions {
  double tol = 1e-8;  // on the duality gap
  int max_epochs = 200000;
  std::optional<Vector> warm_dual;
};

struct ErmResult {
  Vector w;
  Vector dual;  // one variable per sample
  double primal = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  int epochs = 0;
};

/// Minimizes (1/n) sum loss(y_j, <w, features_j>) + rho/2 ||w||^2 over
/// ||w|| <= R_W by exact coordinate ascent on the Fenchel dual. The primal
/// point is the gradient of the conjugate of the constrained regularizer,
/// i.e. the projection of v / rho onto the ball, so it is always feasible.
/// Stops once primal - dual <= tol; throws ConvergenceError carrying the best
/// primal point and its gap otherwise.
ErmResult fit_erm(const Matrix& features, const Vector& labels, const Loss& loss, double rho,
                  double R_W, const ErmOptions& options = {});

/// Hinge loss needs labels in {-1, +1}. Throws ArgumentError otherwise.
void check_labels(const Loss& loss, const Vector& labels);

/// Feature norms above R_psi (up to rounding) throw ArgumentError.
ErmResult train_target_full(const Dictionary& dict, const std::vector<LabeledSample>& data,
                            const TransferConfig& config, const ErmOptions& options = {});
Vector train_target(const Dictionary& dict, const std::vector<LabeledSample>& data,
                    const TransferConfig& config, const ErmOptions& options = {});

struct WStabilityGap {
  double lhs = 0.0;
  double rhs = 0.0;
  double dict_error = 0.0;
  double min_radius = 0.0;  // smallest permissible radius of D* over the data
  double L_psi = 0.0;
  /// Both trainings stop at a nonzero duality gap; by strong convexity each
  /// is within sqrt(2 gap / rho) of its exact minimizer.
  double slack = 0.0;
  bool in_regime = false;  // dict_error <= min(lambda, min_radius)

  bool holds() const noexcept { return lhs <= rhs + slack; }
};

/// lhs = ||w(D_hat) - w(D_star)||, rhs = sqrt(2 R_W L L_psi ||D_hat - D_star||_{1,2} / rho)
/// with L_psi = stability_coefficient(mu(D_star), d, R_x, k, lambda).
WStabilityGap w_stability_gap(const Dictionary& D_hat, const Dictionary& D_star,
                              const std::vector<LabeledSample>& data, const TransferConfig& config,
                              Index k, const ErmOptions& options = {});

struct BoundBreakdown {
  double term_fast_rate = 0.0;
  double term_linear = 0.0;
  double term_sqrt = 0.0;
  double total = 0.0;
  double L_psi_used = 0.0;

  /// The same terms as they come out of the proof when it is carried through
  /// with the automatic rho: the fast term with 4 instead of 2 in front of
  /// the R_r part, and R_W instead of R_psi in the linear term.
  double term_fast_rate_derived = 0.0;
  double term_linear_derived = 0.0;
};

BoundBreakdown excess_bound(const TransferConfig& config, double dict_error, double L_psi);

struct LabelRule {
  Vector w_true;             // applied to the codes under the true dictionary
  double noise_bound = 0.0;  // uniform label noise on [-noise_bound, noise_bound]
};

struct DictSource {
  enum class Kind { Oracle, Learned };
  Kind kind = Kind::Oracle;
  double oracle_error = 0.0;
  int rounds = 20;  // alternating rounds when learned
};

struct PipelineOptions {
  std::size_t heldout = 20000;
  std::size_t oversize = 50;  // noiseless set for w*_T is oversize * n samples
  std::vector<double> rho_schedule{1.0, 0.1, 0.01, 0.001};  // multiples of rho
  double reference_tol = 1e-6;
  ErmOptions erm;
  LassoOptions lasso;
  std::size_t max_rejections = 1000;  // per accepted sample
};

struct ExperimentReport {
  double dict_error = 0.0;  // aligned (1,2) distance of D_hat to D*
  double min_radius = 0.0;
  bool in_regime = false;
  double L_psi = 0.0;
  double max_feature_norm = 0.0;
  std::size_t source_used = 0;
  Vector w_hat;
  double erm_gap = 0.0;
  double risk_hat = 0.0;       // held-out R(D_hat, w_hat)
  double risk_star = 0.0;      // held-out R(D*, w*_T), smaller of the two estimates below
  double risk_reference = 0.0; // held-out risk of the oversized-set minimizer
  double risk_rule = 0.0;      // held-out risk of the labeling rule itself
  double reference_gap = 0.0;  // duality gap of the last reference fit
  double wstar_approx_error = 0.0;  // ||w_reference - w_true||
  double excess = 0.0;
  BoundBreakdown bound;

  bool dominated() const noexcept { return excess <= bound.total; }
};

/// Carries the name of the pipeline stage that failed.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Draws n labeled target samples (and N unlabeled source samples when the
/// dictionary is learned), all rejection-sampled to ||x|| <= R_x, obtains
/// D_hat, trains w_hat and estimates both risks on a held-out set.
ExperimentReport run_pipeline(const GenModelParams& gen, const LabelRule& rule,
                              const TransferConfig& config, const DictSource& source,
                              CounterRng& rng, const PipelineOptions& options = {});

/// Draws one sample from the model with ||x|| <= R_x.
Vector draw_bounded(const GenModelParams& gen, double R_x, CounterRng& rng,
                    std::size_t max_rejections = 1000);

/// d feature columns then the label, one sample per row, no header.
void write_labeled_csv(const std::string& path, const std::vector<LabeledSample>& data);
std::vector<LabeledSample> read_labeled_csv(const std::string& path);

}  // namespace ptl
