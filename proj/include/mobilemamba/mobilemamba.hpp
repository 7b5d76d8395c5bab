#pragma once

#include "mobilemamba/common.hpp"
#include "mobilemamba/tensor.hpp"
#include "mobilemamba/wavelet.hpp"
#include "mobilemamba/ssm.hpp"
#include "mobilemamba/mrffi.hpp"
#include "mobilemamba/model.hpp"
#include "mobilemamba/weights.hpp"
#include "mobilemamba/fusion.hpp"
#include "mobilemamba/metrics.hpp"
#include "mobilemamba/reference.hpp"
#include "mobilemamba/verify.hpp"
