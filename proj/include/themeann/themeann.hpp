#pragma once

#include "themeann/cluster.hpp"
#include "themeann/common.hpp"
#include "themeann/corpus.hpp"
#include "themeann/evaluation.hpp"
#include "themeann/features.hpp"
#include "themeann/image.hpp"
#include "themeann/pipeline.hpp"
#include "themeann/relevance.hpp"
#include "themeann/semantics.hpp"
#include "themeann/synthetic.hpp"
#include "themeann/theme_model.hpp"
