#include "nhlnn/dynamics.hpp"

namespace nhlnn::dyn {
namespace {

struct SystemForms {
  System system;
  template <class S>
  Mat<S> operator()(std::span<const S> q) const {
    return system.constraint_forms<S>(q);
  }
};

struct SystemPhi {
  System system;
  template <class S>
  std::vector<S> operator()(std::span<const S> x) const {
    const std::size_t n = system.dof();
    return system.constraint_values<S>(x.first(n), x.subspan(n, n));
  }
};

}  // namespace

std::shared_ptr<const ConstraintModel> linear_constraints_of(const System& sys) {
  if (sys.rank() == 0) {
    return nullptr;
  }
  return std::make_shared<LinearConstraints<SystemForms>>(SystemForms{sys}, sys.dof(), sys.rank());
}

std::shared_ptr<const ConstraintModel> generic_constraints_of(const System& sys) {
  if (sys.rank() == 0) {
    return nullptr;
  }
  return std::make_shared<GenericConstraints<SystemPhi>>(SystemPhi{sys}, sys.dof(), sys.rank());
}

}  // namespace nhlnn::dyn
