#pragma once

#include "cocola/checkpoint_diff.hpp"
#include "cocola/corpus.hpp"
#include "cocola/error.hpp"
#include "cocola/format.hpp"
#include "cocola/freeze_plan.hpp"
#include "cocola/langid.hpp"
#include "cocola/language.hpp"
#include "cocola/matcher.hpp"
#include "cocola/metrics.hpp"
#include "cocola/metrics_io.hpp"
#include "cocola/naming_scheme.hpp"
#include "cocola/normalize.hpp"
#include "cocola/report.hpp"
#include "cocola/run_config.hpp"
#include "cocola/safetensors.hpp"
#include "cocola/synth.hpp"
#include "cocola/version.hpp"
