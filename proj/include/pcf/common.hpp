#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>
#include <vector>

namespace pcf {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define PCF_DEFINE_ERROR(Name)                                          \
    struct Name : Error {                                               \
        explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
    }

PCF_DEFINE_ERROR(InvalidFractalSpec);
PCF_DEFINE_ERROR(AddressCollision);
PCF_DEFINE_ERROR(NotRenormalizable);
PCF_DEFINE_ERROR(LevelMismatch);
PCF_DEFINE_ERROR(NotOnCellBoundary);
PCF_DEFINE_ERROR(SingularSystem);
PCF_DEFINE_ERROR(SolverFailure);
PCF_DEFINE_ERROR(NoSchedule);
PCF_DEFINE_ERROR(ScheduleViolation);
PCF_DEFINE_ERROR(FitDiverged);
PCF_DEFINE_ERROR(CellsIntersect);
PCF_DEFINE_ERROR(ZeroMass);
PCF_DEFINE_ERROR(NearSingularM);
PCF_DEFINE_ERROR(LeftCandidateSpace);
PCF_DEFINE_ERROR(NoConvergence);
PCF_DEFINE_ERROR(NormalizationZero);
PCF_DEFINE_ERROR(IllConditionedA);
PCF_DEFINE_ERROR(ResolutionExceeded);
PCF_DEFINE_ERROR(TailNotSummable);
PCF_DEFINE_ERROR(NotACover);
PCF_DEFINE_ERROR(CoverGap);
PCF_DEFINE_ERROR(NoAdmissibleCells);
PCF_DEFINE_ERROR(CertificateTooWeak);

#undef PCF_DEFINE_ERROR

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

}  // namespace pcf
