#pragma once

#include <stdexcept>
#include <string>

namespace bvcs {

/// Base class for every error raised by the library. Catching this is enough
/// to turn any library failure into an ERROR verdict or a CLI exit code.
class Error : public std::runtime_error {
public:
    explicit Error(std::string message) : std::runtime_error(std::move(message)) {}
};

// workbook-model
struct MalformedAddress : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct UnresolvedSheet : Error { using Error::Error; };
struct UnknownSheet : Error { using Error::Error; };
struct EmptyWorkbook : Error { using Error::Error; };
struct OverwriteFormula : Error { using Error::Error; };

// schema-gen
struct SchemaFormatError : Error { using Error::Error; };
struct ConflictingTable : Error { using Error::Error; };

// data-sources
struct BindingFormatError : Error { using Error::Error; };
struct UnknownAdapter : Error { using Error::Error; };
struct MissingData : Error { using Error::Error; };
struct AmbiguousData : Error { using Error::Error; };
struct SourceUnavailable : Error { using Error::Error; };
struct TypeMismatch : Error { using Error::Error; };
struct UnboundField : Error { using Error::Error; };

// validator
struct CapacityExceeded : Error { using Error::Error; };

// batch-runner / IO
struct ManifestError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace bvcs
