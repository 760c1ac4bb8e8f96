#pragma once

#include "mbnrsfm/admm.hpp"
#include "mbnrsfm/clustering.hpp"
#include "mbnrsfm/error.hpp"
#include "mbnrsfm/io.hpp"
#include "mbnrsfm/linalg.hpp"
#include "mbnrsfm/metrics.hpp"
#include "mbnrsfm/pipeline.hpp"
#include "mbnrsfm/scene.hpp"
#include "mbnrsfm/synth.hpp"
