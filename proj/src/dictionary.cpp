#include "omf/dictionary.hpp"

namespace omf {

std::string to_string(ConstraintSet::Kind kind) {
    switch (kind) {
        case ConstraintSet::Kind::l2_ball:
            return "l2";
        case ConstraintSet::Kind::nonneg_l2_ball:
            return "nonneg";
        case ConstraintSet::Kind::elastic_net_ball:
            return "elastic";
        case ConstraintSet::Kind::fused_lasso_ball:
            return "fused";
    }
    return "l2";
}

ConstraintSet::Kind parse_constraint_kind(const std::string& name) {
    if (name == "l2") return ConstraintSet::Kind::l2_ball;
    if (name == "nonneg") return ConstraintSet::Kind::nonneg_l2_ball;
    if (name == "elastic") return ConstraintSet::Kind::elastic_net_ball;
    if (name == "fused") return ConstraintSet::Kind::fused_lasso_ball;
    throw InvalidArgument("unknown constraint '" + name + "' (expected l2, nonneg, elastic or fused)");
}

}  // namespace omf
