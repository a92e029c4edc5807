// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace coop {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define COOP_DECLARE_ERROR(Name)           \
    class Name : public Error {            \
    public:                                \
        using Error::Error;                \
    }

COOP_DECLARE_ERROR(DomainError);          // argument outside a function's domain
COOP_DECLARE_ERROR(InputError);           // malformed or incomplete input data
COOP_DECLARE_ERROR(ConfigError);
COOP_DECLARE_ERROR(VocabularyError);      // unknown label / category / entity
COOP_DECLARE_ERROR(OrderingError);         // non-monotonic timestamps
COOP_DECLARE_ERROR(InsufficientHistory);
COOP_DECLARE_ERROR(InfeasibleFrame);      // frame absent from a lookup table
COOP_DECLARE_ERROR(CorruptTable);
COOP_DECLARE_ERROR(StaleTable);           // snapshot built for another ontology
COOP_DECLARE_ERROR(DecodeError);          // malformed wire frame
COOP_DECLARE_ERROR(LinkUnusable);
COOP_DECLARE_ERROR(IoError);

#undef COOP_DECLARE_ERROR

/// Declared body length above the frame cap; rejected before the body is read.
class FrameTooLarge : public DecodeError {
public:
    using DecodeError::DecodeError;
};

}  // namespace coop
