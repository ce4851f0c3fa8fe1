// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#ifndef CDGP_MODEL_IO_HPP_
#define CDGP_MODEL_IO_HPP_

#include <string>

#include "cdgp/inference.hpp"

namespace cdgp {

/// Writes a fitted model (and theta posterior / constraint, when present) as
/// a flat key=value text file, matrices in row-major full double precision.
void save_fit(const FitResult& fit, const std::string& path);

/// Inverse of save_fit. Spectral draws are regenerated from their stored
/// seeds. The training trace is not persisted.
FitResult load_fit(const std::string& path);

}  // namespace cdgp

#endif  // CDGP_MODEL_IO_HPP_
