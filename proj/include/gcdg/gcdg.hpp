// Umbrella header.
#pragma once

#include "gcdg/analysis.hpp"
#include "gcdg/config.hpp"
#include "gcdg/data.hpp"
#include "gcdg/dcb.hpp"
#include "gcdg/features.hpp"
#include "gcdg/heads.hpp"
#include "gcdg/hlc.hpp"
#include "gcdg/numerics.hpp"
#include "gcdg/scb.hpp"
#include "gcdg/train.hpp"
