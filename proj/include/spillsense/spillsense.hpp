#pragma once

#include "spillsense/baseline.hpp"
#include "spillsense/config.hpp"
#include "spillsense/errors.hpp"
#include "spillsense/field.hpp"
#include "spillsense/flow.hpp"
#include "spillsense/grid.hpp"
#include "spillsense/harness.hpp"
#include "spillsense/io.hpp"
#include "spillsense/oil.hpp"
#include "spillsense/placement.hpp"
#include "spillsense/plot.hpp"
#include "spillsense/rom.hpp"
#include "spillsense/uncertainty.hpp"
