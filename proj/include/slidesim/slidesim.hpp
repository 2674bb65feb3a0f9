#pragma once

#include "slidesim/backend.hpp"
#include "slidesim/embedding.hpp"
#include "slidesim/error.hpp"
#include "slidesim/magnification.hpp"
#include "slidesim/oracle.hpp"
#include "slidesim/parallel.hpp"
#include "slidesim/pipeline.hpp"
#include "slidesim/reduction.hpp"
#include "slidesim/search.hpp"
#include "slidesim/similarity.hpp"
#include "slidesim/slide_io.hpp"
#include "slidesim/synth.hpp"
#include "slidesim/tissue_filter.hpp"
