#pragma once

#include <complex>
#include <numbers>

#include <Eigen/Dense>

namespace resona {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

}  // namespace resona
