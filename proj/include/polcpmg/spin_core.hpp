#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

// Dense linear algebra for small spin Hilbert spaces. The working space is
// electron ⊗ nucleus (dimension 4); ordering is electron-first everywhere,
// so basis index = 2 * electron + nucleus with |0>,|↑> at index 0.
namespace polcpmg {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

// Joint electron ⊗ nucleus operators and states.
using Operator = Eigen::Matrix4cd;
using State = Eigen::Vector4cd;
using Qubit = Eigen::Vector2cd;
using QubitOperator = Eigen::Matrix2cd;

inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kUnitaryTol = 1e-10;
inline constexpr double kTraceTol = 1e-10;

enum class Spin { Half, One };
enum class Axis { X, Y, Z };

struct SpinOperators {
  ComplexMatrix x;
  ComplexMatrix y;
  ComplexMatrix z;
};

/// Spin-1/2: S = σ/2. Spin-1: standard 3×3 generators with S_z = diag(1, 0, -1).
SpinOperators pauli_operators(Spin spin);

/// Tensor product a ⊗ b (first factor is the slow index).
ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b);

/// Electron (S) or nuclear (I) spin-1/2 operator embedded in the joint space.
const Operator& electron_op(Axis axis);
const Operator& nuclear_op(Axis axis);
const Operator& identity4();

/// Max-norm of M − M† scaled by max(1, ‖M‖_max).
template <typename Derived>
double hermiticity_error(const Eigen::MatrixBase<Derived>& m) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.adjoint()).cwiseAbs().maxCoeff() / scale;
}

/// ‖U†U − 𝟙‖_max.
template <typename Derived>
double unitarity_error(const Eigen::MatrixBase<Derived>& u) {
  using Plain = typename Derived::PlainObject;
  const Plain id = Plain::Identity(u.rows(), u.cols());
  return (u.adjoint() * u - id).cwiseAbs().maxCoeff();
}

class NotHermitianError : public std::invalid_argument {
 public:
  explicit NotHermitianError(double norm);
  double norm() const { return norm_; }

 private:
  double norm_;
};

/// exp(−i h t) through the Hermitian eigendecomposition of h.
/// Throws NotHermitianError (carrying the offending norm) when h is not Hermitian.
template <typename Derived>
typename Derived::PlainObject expm_hermitian(const Eigen::MatrixBase<Derived>& h, double t) {
  using Plain = typename Derived::PlainObject;
  const double err = hermiticity_error(h);
  if (err > kHermitianTol) throw NotHermitianError(err);
  const Plain hh = h;
  Eigen::SelfAdjointEigenSolver<Plain> es(hh);
  const auto& v = es.eigenvectors();
  const auto phases = (es.eigenvalues().array() * (-t)).unaryExpr(
      [](double x) { return std::polar(1.0, x); });
  return v * phases.matrix().asDiagonal() * v.adjoint();
}

/// Single-qubit rotation exp(−i angle (cos φ S_x + sin φ S_y)).
QubitOperator rotation_xy(double angle, double phase);

namespace basis {
Qubit zero();     // S_z = +1/2
Qubit one();      // S_z = −1/2
Qubit x_plus();   // (|0> + |1>)/√2
Qubit x_minus();  // (|0> − |1>)/√2
Qubit up();
Qubit down();
State product(const Qubit& electron, const Qubit& nucleus);
}  // namespace basis

/// Validated density matrix: Hermitian, unit trace, non-negative spectrum.
class DensityMatrix {
 public:
  explicit DensityMatrix(ComplexMatrix m);

  static DensityMatrix pure(const ComplexVector& psi);
  static DensityMatrix maximally_mixed(Eigen::Index dim);
  static DensityMatrix product(const DensityMatrix& electron, const DensityMatrix& nucleus);

  const ComplexMatrix& matrix() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

  /// Re Tr(ρ A).
  double expectation(const ComplexMatrix& op) const;
  DensityMatrix evolve(const ComplexMatrix& u) const;

 private:
  ComplexMatrix m_;
};

/// Electron reduced state of a 4×4 joint state (traces out the nucleus).
DensityMatrix partial_trace_nucleus(const DensityMatrix& rho);
/// Nuclear reduced state of a 4×4 joint state (traces out the electron).
DensityMatrix partial_trace_electron(const DensityMatrix& rho);

// Unchecked variants for hot loops.
QubitOperator trace_out_nucleus(const Operator& rho);
QubitOperator trace_out_electron(const Operator& rho);
Operator tensor(const QubitOperator& electron, const QubitOperator& nucleus);

}  // namespace polcpmg
