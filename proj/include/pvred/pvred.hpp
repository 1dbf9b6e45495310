#pragma once

#include "pvred/data.hpp"
#include "pvred/error.hpp"
#include "pvred/eval.hpp"
#include "pvred/gradcheck.hpp"
#include "pvred/model.hpp"
#include "pvred/model_io.hpp"
#include "pvred/net.hpp"
#include "pvred/plot.hpp"
#include "pvred/posembed.hpp"
#include "pvred/rotmath.hpp"
#include "pvred/textio.hpp"
#include "pvred/train.hpp"

namespace pvred {
inline constexpr const char* kVersion = "0.1.0";
}
