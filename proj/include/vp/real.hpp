#pragma once

namespace vp {

#ifdef VP_REAL32
using real = float;
#else
using real = double;
#endif

}  // namespace vp
