#include "vqgb/bounds.hpp"

#include <cmath>
#include <stdexcept>

namespace vqgb {

namespace {

double root_n(const BoundInputs& b) { return std::sqrt(static_cast<double>(b.n)); }

void format_value(std::ostream& os, double v) {
  if (std::isinf(v)) {
    os << "inf";
  } else {
    os << v;
  }
}

}  // namespace

void BoundInputs::validate() const {
  if (n == 0) throw std::invalid_argument("BoundInputs: n must be >= 1");
  if (Delta < 0.0 || Delta_z < 0.0) {
    throw std::invalid_argument("BoundInputs: diameters must be nonnegative");
  }
  if (!(delta_cover > 0.0 && delta_cover <= 1.0)) {
    throw std::invalid_argument("BoundInputs: delta_cover must lie in (0,1]");
  }
  if (kl_empirical < 0.0 || kl_cmi < 0.0 || train_loss_mean < 0.0 ||
      log_covering_number < 0.0 || beta_q < 0.0) {
    throw std::invalid_argument("BoundInputs: negative term");
  }
}

double rhs_supersample(const BoundInputs& b) {
  b.validate();
  const double kl = b.kl_empirical + b.kl_cmi;
  if (std::isinf(kl)) return kl;
  return 2.0 * b.Delta * std::sqrt(kl) + b.Delta / root_n(b);
}

double rhs_permutation(const BoundInputs& b) {
  b.validate();
  if (std::isinf(b.kl_cmi)) return b.kl_cmi;
  return 3.0 * b.Delta * std::sqrt(b.kl_cmi) + b.Delta / root_n(b);
}

double rhs_metric_entropy(const BoundInputs& b) {
  b.validate();
  const double nd = static_cast<double>(b.n);
  return 4.0 * b.Delta * std::sqrt(2.0 * b.beta_q * nd * b.delta_cover * b.Delta_z) +
         3.0 * b.Delta * std::sqrt(2.0 * b.log_covering_number / nd) + b.Delta / root_n(b);
}

double rhs_wasserstein(const BoundInputs& b) {
  b.validate();
  if (std::isinf(b.kl_empirical)) return b.kl_empirical;
  return 2.0 * b.train_loss_mean + 4.0 * b.Delta * std::sqrt(2.0 * b.kl_empirical) +
         2.0 * b.Delta / root_n(b);
}

double rhs_basic_it(const BoundInputs& b) {
  b.validate();
  if (std::isinf(b.kl_cmi)) return b.kl_cmi;
  return b.Delta * std::sqrt(2.0 * b.kl_cmi);
}

double natarajan_cmi_cap(std::size_t d_K, std::size_t K, std::size_t n) {
  if (K < 2) throw std::invalid_argument("natarajan_cmi_cap: K must be >= 2");
  if (d_K == 0) throw std::invalid_argument("natarajan_cmi_cap: d_K must be >= 1");
  if (2 * n <= d_K + 1) {
    throw std::invalid_argument("natarajan_cmi_cap: requires 2n > d_K + 1");
  }
  const double dk = static_cast<double>(d_K);
  const double pairs = 0.5 * static_cast<double>(K) * static_cast<double>(K - 1);
  return dk * std::log(pairs * 2.0 * M_E * static_cast<double>(n) / dk);
}

bool BoundReport::gap_exceeds_any_rhs() const {
  return measured_gap > supersample || measured_gap > permutation ||
         measured_gap > metric_entropy;
}

void BoundReport::write_csv_header(std::ostream& os) {
  os << "n,K,Delta,Delta_z,kl_empirical,kl_cmi,train_loss_mean,beta_q,delta_cover,"
        "log_covering_number,d_K,measured_gap,rhs_supersample,rhs_permutation,"
        "rhs_metric_entropy,rhs_wasserstein,rhs_basic_it,natarajan_cap,unestimated_terms\n";
}

void BoundReport::write_csv_row(std::ostream& os) const {
  os << inputs.n << ',' << inputs.K << ',' << inputs.Delta << ',' << inputs.Delta_z << ',';
  format_value(os, inputs.kl_empirical);
  os << ',';
  format_value(os, inputs.kl_cmi);
  os << ',' << inputs.train_loss_mean << ',' << inputs.beta_q << ',' << inputs.delta_cover
     << ',' << inputs.log_covering_number << ',' << inputs.d_K << ',' << measured_gap << ',';
  format_value(os, supersample);
  os << ',';
  format_value(os, permutation);
  os << ',';
  format_value(os, metric_entropy);
  os << ',';
  format_value(os, wasserstein);
  os << ',';
  format_value(os, basic_it);
  os << ',' << natarajan_cap << ',';
  for (std::size_t i = 0; i < unestimated_terms.size(); ++i) {
    if (i) os << ';';
    os << unestimated_terms[i];
  }
  os << '\n';
}

void BoundReport::write_text(std::ostream& os) const {
  os << "bound report (n=" << inputs.n << ", K=" << inputs.K << ", Delta=" << inputs.Delta
     << ")\n";
  os << "  measured gap            " << measured_gap << '\n';
  os << "  kl_empirical (per n)    ";
  format_value(os, inputs.kl_empirical);
  os << "\n  kl_cmi (per n)          ";
  format_value(os, inputs.kl_cmi);
  os << "\n  train loss mean         " << inputs.train_loss_mean << '\n';
  os << "  rhs supersample         ";
  format_value(os, supersample);
  os << "\n  rhs permutation (proxy) ";
  format_value(os, permutation);
  os << "\n  rhs metric entropy      ";
  format_value(os, metric_entropy);
  os << "\n  rhs wasserstein         ";
  format_value(os, wasserstein);
  os << "\n  rhs basic it            ";
  format_value(os, basic_it);
  os << "\n  natarajan cap           " << natarajan_cap << '\n';
  os << "  unestimated terms       ";
  for (std::size_t i = 0; i < unestimated_terms.size(); ++i) {
    if (i) os << "; ";
    os << unestimated_terms[i];
  }
  os << '\n';
}

BoundReport assemble_bound_report(const BoundInputs& inputs, double measured_gap) {
  BoundReport r;
  r.inputs = inputs;
  r.measured_gap = measured_gap;
  r.supersample = rhs_supersample(inputs);
  r.permutation = rhs_permutation(inputs);
  r.metric_entropy = rhs_metric_entropy(inputs);
  r.wasserstein = rhs_wasserstein(inputs);
  r.basic_it = rhs_basic_it(inputs);
  if (inputs.K >= 2 && 2 * inputs.n > inputs.d_K + 1) {
    r.natarajan_cap = natarajan_cmi_cap(inputs.d_K, inputs.K, inputs.n);
  }
  r.unestimated_terms = {"I(e,phi;S)",
                         "I(J~;T|e,phi,X~) proxied by the supersample CMI estimate"};
  return r;
}

}  // namespace vqgb
