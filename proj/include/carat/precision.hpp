// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

// Selects the scalar type of the numeric core. The core library is built once
// per precision; each build lives in its own inline namespace.

#pragma once

#if !defined(CARAT_REAL) || !defined(CARAT_PRECISION_NS)
#error "define CARAT_REAL and CARAT_PRECISION_NS (link carat_use_f32 or carat_use_f80)"
#endif

#define CARAT_NS_BEGIN \
  namespace carat {    \
  inline namespace CARAT_PRECISION_NS {
#define CARAT_NS_END \
  }                  \
  }

CARAT_NS_BEGIN
using Real = CARAT_REAL;
CARAT_NS_END
