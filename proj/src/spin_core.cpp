#include "polcpmg/spin_core.hpp"

#include <array>
#include <cmath>
#include <sstream>

namespace polcpmg {

namespace {

const Complex kI{0.0, 1.0};

QubitOperator half_op(Axis axis) {
  QubitOperator s;
  switch (axis) {
    case Axis::X: s << 0.0, 0.5, 0.5, 0.0; break;
    case Axis::Y: s << 0.0, -0.5 * kI, 0.5 * kI, 0.0; break;
    case Axis::Z: s << 0.5, 0.0, 0.0, -0.5; break;
  }
  return s;
}

std::array<Operator, 3> make_embedded(bool electron) {
  std::array<Operator, 3> out;
  const QubitOperator id = QubitOperator::Identity();
  for (int k = 0; k < 3; ++k) {
    const QubitOperator s = half_op(static_cast<Axis>(k));
    out[k] = electron ? tensor(s, id) : tensor(id, s);
  }
  return out;
}

}  // namespace

SpinOperators pauli_operators(Spin spin) {
  if (spin == Spin::Half) {
    return {half_op(Axis::X), half_op(Axis::Y), half_op(Axis::Z)};
  }
  const double r = 1.0 / std::sqrt(2.0);
  ComplexMatrix x = ComplexMatrix::Zero(3, 3);
  ComplexMatrix y = ComplexMatrix::Zero(3, 3);
  ComplexMatrix z = ComplexMatrix::Zero(3, 3);
  x(0, 1) = x(1, 0) = x(1, 2) = x(2, 1) = r;
  y(0, 1) = -kI * r;
  y(1, 0) = kI * r;
  y(1, 2) = -kI * r;
  y(2, 1) = kI * r;
  z(0, 0) = 1.0;
  z(2, 2) = -1.0;
  return {x, y, z};
}

ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Operator tensor(const QubitOperator& electron, const QubitOperator& nucleus) {
  Operator out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = electron(i, j) * nucleus;
  return out;
}

const Operator& electron_op(Axis axis) {
  static const auto ops = make_embedded(true);
  return ops[static_cast<int>(axis)];
}

const Operator& nuclear_op(Axis axis) {
  static const auto ops = make_embedded(false);
  return ops[static_cast<int>(axis)];
}

const Operator& identity4() {
  static const Operator id = Operator::Identity();
  return id;
}

NotHermitianError::NotHermitianError(double norm)
    : std::invalid_argument([norm] {
        std::ostringstream os;
        os << "matrix is not Hermitian: scaled ||H - H^dagger||_max = " << norm;
        return os.str();
      }()),
      norm_(norm) {}

QubitOperator rotation_xy(double angle, double phase) {
  // exp(−i a n·σ/2) = cos(a/2) − i sin(a/2) n·σ
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  const Complex e_minus = std::polar(1.0, -phase);
  const Complex e_plus = std::polar(1.0, phase);
  QubitOperator r;
  r << c, -kI * s * e_minus, -kI * s * e_plus, c;
  return r;
}

namespace basis {
Qubit zero() { return Qubit(1.0, 0.0); }
Qubit one() { return Qubit(0.0, 1.0); }
Qubit x_plus() { return Qubit(1.0, 1.0) / std::sqrt(2.0); }
Qubit x_minus() { return Qubit(1.0, -1.0) / std::sqrt(2.0); }
Qubit up() { return Qubit(1.0, 0.0); }
Qubit down() { return Qubit(0.0, 1.0); }
State product(const Qubit& electron, const Qubit& nucleus) {
  State s;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) s(2 * i + j) = electron(i) * nucleus(j);
  return s;
}
}  // namespace basis

DensityMatrix::DensityMatrix(ComplexMatrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols() || m_.rows() == 0)
    throw std::invalid_argument("density matrix must be square and non-empty");
  const double herm = (m_ - m_.adjoint()).cwiseAbs().maxCoeff();
  if (herm > kHermitianTol) {
    std::ostringstream os;
    os << "density matrix is not Hermitian (" << herm << ")";
    throw std::invalid_argument(os.str());
  }
  const Complex tr = m_.trace();
  if (std::abs(tr - 1.0) > kTraceTol) {
    std::ostringstream os;
    os << "density matrix trace " << tr << " differs from 1";
    throw std::invalid_argument(os.str());
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(m_, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -kTraceTol) {
    std::ostringstream os;
    os << "density matrix has negative eigenvalue " << es.eigenvalues().minCoeff();
    throw std::invalid_argument(os.str());
  }
}

DensityMatrix DensityMatrix::pure(const ComplexVector& psi) {
  const ComplexVector n = psi.normalized();
  return DensityMatrix(n * n.adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed(Eigen::Index dim) {
  return DensityMatrix(ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim));
}

DensityMatrix DensityMatrix::product(const DensityMatrix& electron, const DensityMatrix& nucleus) {
  return DensityMatrix(kron(electron.matrix(), nucleus.matrix()));
}

double DensityMatrix::expectation(const ComplexMatrix& op) const {
  if (op.rows() != m_.rows() || op.cols() != m_.cols())
    throw std::invalid_argument("operator dimension does not match density matrix");
  return (m_ * op).trace().real();
}

DensityMatrix DensityMatrix::evolve(const ComplexMatrix& u) const {
  if (u.rows() != m_.rows() || u.cols() != m_.cols())
    throw std::invalid_argument("propagator dimension does not match density matrix");
  ComplexMatrix next = u * m_ * u.adjoint();
  // Re-symmetrise; rounding otherwise breaks Hermiticity at the 1e-16 level.
  next = 0.5 * (next + next.adjoint()).eval();
  return DensityMatrix(std::move(next));
}

QubitOperator trace_out_nucleus(const Operator& rho) {
  QubitOperator out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out(i, j) = rho(2 * i, 2 * j) + rho(2 * i + 1, 2 * j + 1);
  return out;
}

QubitOperator trace_out_electron(const Operator& rho) {
  QubitOperator out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out(i, j) = rho(i, j) + rho(2 + i, 2 + j);
  return out;
}

DensityMatrix partial_trace_nucleus(const DensityMatrix& rho) {
  if (rho.dim() != 4) throw std::invalid_argument("partial trace expects a 4x4 electron-nucleus state");
  const Operator m = rho.matrix();
  return DensityMatrix(ComplexMatrix(trace_out_nucleus(m)));
}

DensityMatrix partial_trace_electron(const DensityMatrix& rho) {
  if (rho.dim() != 4) throw std::invalid_argument("partial trace expects a 4x4 electron-nucleus state");
  const Operator m = rho.matrix();
  return DensityMatrix(ComplexMatrix(trace_out_electron(m)));
}

}  // namespace polcpmg
