#include "qflow/types.hpp"

#include <sstream>

namespace qflow {

namespace {

std::string node_message(double rho, const Vec3& p, double t)
{
    std::ostringstream os;
    os << "node proximity: rho=" << rho << " at (" << p.x() << ", " << p.y() << ", " << p.z()
       << "), t=" << t;
    return os.str();
}

std::string underflow_message(double step, double t)
{
    std::ostringstream os;
    os << "step size underflow: h=" << step << " at t=" << t;
    return os.str();
}

}  // namespace

NodeProximity::NodeProximity(double rho, const Vec3& point, double time)
    : std::runtime_error(node_message(rho, point, time)), rho_(rho), point_(point), time_(time)
{
}

StepUnderflow::StepUnderflow(double step, double time)
    : std::runtime_error(underflow_message(step, time)), step_(step), time_(time)
{
}

}  // namespace qflow
