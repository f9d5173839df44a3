#pragma once

#include "pal/config.hpp"
#include "pal/embeddings.hpp"
#include "pal/engine.hpp"
#include "pal/guide.hpp"
#include "pal/io.hpp"
#include "pal/logistic.hpp"
#include "pal/lius.hpp"
#include "pal/matching.hpp"
#include "pal/parallel.hpp"
#include "pal/simulator.hpp"
#include "pal/types.hpp"
