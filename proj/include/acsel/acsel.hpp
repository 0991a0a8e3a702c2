#pragma once

#include <acsel/diagnostics.hpp>
#include <acsel/error.hpp>
#include <acsel/estimation.hpp>
#include <acsel/harness.hpp>
#include <acsel/io.hpp>
#include <acsel/likelihood.hpp>
#include <acsel/linalg.hpp>
#include <acsel/model_types.hpp>
#include <acsel/models.hpp>
#include <acsel/presets.hpp>
#include <acsel/selection.hpp>
