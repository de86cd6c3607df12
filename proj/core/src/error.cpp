#include "sarc/error.hpp"

// Out-of-line anchor so the exception vtables live in one translation unit.
namespace sarc {}
