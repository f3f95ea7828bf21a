#pragma once

#include "flatness/errors.hpp"
#include "flatness/geom.hpp"
#include "flatness/kdtree.hpp"
#include "flatness/nets.hpp"
#include "flatness/parallel.hpp"
#include "flatness/dyadic.hpp"
#include "flatness/netcubes.hpp"
#include "flatness/flat_search.hpp"
#include "flatness/beta.hpp"
#include "flatness/corona.hpp"
#include "flatness/tst.hpp"
#include "flatness/dimension.hpp"
#include "flatness/gen.hpp"
#include "flatness/io.hpp"
