#pragma once

/// Umbrella header.
#include "rns/errors.hpp"
#include "rns/grid.hpp"
#include "rns/parallel.hpp"
#include "rns/fft.hpp"
#include "rns/field.hpp"
#include "rns/spectral.hpp"
#include "rns/format.hpp"
#include "rns/snapshot_io.hpp"
#include "rns/regularizer.hpp"
#include "rns/tightness.hpp"
#include "rns/initial_data.hpp"
#include "rns/ledger.hpp"
#include "rns/dynamics.hpp"
#include "rns/energy_diag.hpp"
#include "rns/limit_lab.hpp"
#include "rns/config.hpp"
#include "rns/runner.hpp"
