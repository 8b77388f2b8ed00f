/*
 * Copyright 2026 The GPSL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GPSL_ERROR_HPP
#define GPSL_ERROR_HPP

#include <stdexcept>
#include <string>

namespace gpsl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (ragged columns, bad numbers, truncated model).
class FormatError : public Error {
public:
    using Error::Error;
};

class EmptyCorpusError : public Error {
public:
    using Error::Error;
};

class TemplateError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

/// Decoder requested for a dependency set it cannot handle.
class UnsupportedDependencyError : public Error {
public:
    using Error::Error;
};

/// Factorization failure or other loss of numerical validity.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace gpsl

#endif
