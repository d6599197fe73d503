#ifndef LIOUVILLE_FLOW_HPP
#define LIOUVILLE_FLOW_HPP

#include <liouville_flow/beckmann.hpp>
#include <liouville_flow/bounds.hpp>
#include <liouville_flow/bspline.hpp>
#include <liouville_flow/core.hpp>
#include <liouville_flow/density_erm.hpp>
#include <liouville_flow/flow.hpp>
#include <liouville_flow/io.hpp>
#include <liouville_flow/parallel.hpp>
#include <liouville_flow/quadrature.hpp>
#include <liouville_flow/random.hpp>
#include <liouville_flow/requ_net.hpp>

#endif
