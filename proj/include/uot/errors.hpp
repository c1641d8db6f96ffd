#pragma once

#include <stdexcept>
#include <string>

namespace uot {

/// Base class for all library errors.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or argument violations when building tape expressions.
struct shape_error : error {
    using error::error;
};

/// Non-finite values, rejected logs, aborted integrations.
struct numeric_error : error {
    using error::error;
};

/// Invalid run configuration (bad test id, malformed file, ...).
struct config_error : error {
    using error::error;
};

}  // namespace uot
