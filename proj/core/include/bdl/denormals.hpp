#pragma once

#if defined(__SSE__) || defined(__x86_64__)
#include <xmmintrin.h>
#define BDL_HAVE_MXCSR 1
#endif

namespace bdl {

// Sets flush-to-zero and denormals-are-zero for the current thread while in
// scope. Saturated sigmoids drive GAN gradients into the subnormal range,
// where x86 arithmetic is several times slower.
class FlushDenormalsScope {
 public:
  FlushDenormalsScope() {
#ifdef BDL_HAVE_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);
#endif
  }
  ~FlushDenormalsScope() {
#ifdef BDL_HAVE_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormalsScope(const FlushDenormalsScope&) = delete;
  FlushDenormalsScope& operator=(const FlushDenormalsScope&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace bdl
