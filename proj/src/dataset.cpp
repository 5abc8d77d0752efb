#include "dataset.hpp"

#include <cmath>
#include <sstream>

namespace blpnp {

namespace {

void check_finite(const Matrix& m, const char* name, Index rows_per_market, std::vector<std::string>& errors) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << name << " not finite at market " << r / rows_per_market << ", row " << r % rows_per_market
           << ", column " << c;
        errors.push_back(os.str());
      }
}

}  // namespace

MarketDataset::MarketDataset(Index markets, Index products, Matrix x, Matrix z, Vector shares, Matrix nu,
                             Matrix demo, std::optional<Vector> market_size)
    : T_(markets),
      J_(products),
      N_(0),
      x_(std::move(x)),
      z_(std::move(z)),
      shares_(std::move(shares)),
      nu_(std::move(nu)),
      demo_(std::move(demo)),
      market_size_(std::move(market_size)) {
  if (T_ < 1 || J_ < 1) throw InputError("dataset needs at least one market and one product");
  const Index obs = T_ * J_;
  std::vector<std::string> errors;
  if (x_.rows() != obs) errors.push_back("x must have T*J rows");
  if (z_.rows() != obs) errors.push_back("z must have T*J rows");
  if (shares_.size() != obs) errors.push_back("shares must have T*J entries");
  if (x_.cols() < 1) errors.push_back("x needs at least one characteristic");
  if (nu_.rows() % T_ != 0 || nu_.rows() == 0) errors.push_back("nu must have T*N rows with N >= 1");
  if (nu_.cols() != x_.cols()) errors.push_back("nu must have one column per characteristic");
  if (demo_.rows() == 0 && demo_.cols() == 0) demo_.resize(nu_.rows(), 0);
  if (demo_.rows() != nu_.rows()) errors.push_back("demo must have T*N rows");
  if (market_size_ && market_size_->size() != T_) errors.push_back("market_size must have T entries");
  if (!errors.empty()) {
    std::ostringstream os;
    for (const auto& e : errors) os << e << "; ";
    throw InputError(os.str());
  }
  N_ = nu_.rows() / T_;

  check_finite(x_, "x", J_, errors);
  check_finite(z_, "z", J_, errors);
  check_finite(nu_, "nu", N_, errors);
  check_finite(demo_, "demo", N_, errors);

  outside_.resize(T_);
  for (Index t = 0; t < T_; ++t) {
    double inside = 0.0;
    for (Index j = 0; j < J_; ++j) {
      const double s = shares_(t * J_ + j);
      if (!(s > 0.0 && s < 1.0)) {
        std::ostringstream os;
        os << "share out of (0,1) at market " << t << ", product " << j << ": " << s;
        errors.push_back(os.str());
      }
      inside += s;
    }
    outside_(t) = 1.0 - inside;
    if (!(outside_(t) > 0.0)) {
      std::ostringstream os;
      os << "inside shares sum to " << inside << " in market " << t << " (outside share must be positive)";
      errors.push_back(os.str());
    }
  }
  if (!errors.empty()) {
    std::ostringstream os;
    for (std::size_t i = 0; i < errors.size() && i < 50; ++i) os << errors[i] << "; ";
    if (errors.size() > 50) os << "(" << errors.size() - 50 << " more)";
    throw InputError(os.str());
  }
  log_shares_ = shares_.array().log();
}

void MarketDataset::require_order_condition() const {
  if (instruments() < parameter_count()) {
    std::ostringstream os;
    os << "order condition fails: " << instruments() << " instruments for " << parameter_count() << " parameters";
    throw InputError(os.str());
  }
}

}  // namespace blpnp
