#pragma once

#include "rodentsim/agent.hpp"
#include "rodentsim/core.hpp"
#include "rodentsim/io.hpp"
#include "rodentsim/metrics.hpp"
#include "rodentsim/protocol.hpp"
#include "rodentsim/random.hpp"
