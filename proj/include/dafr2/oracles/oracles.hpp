#pragma once

#include "dafr2/oracles/closed_form.hpp"
#include "dafr2/oracles/regression.hpp"
#include "dafr2/oracles/whitening.hpp"
