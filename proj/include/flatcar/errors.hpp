// Copyright 2026 The flatcar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLATCAR__ERRORS_HPP_
#define FLATCAR__ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace flatcar
{

class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a function (time out of range, T <= 0, ...).
class DomainError : public Error
{
public:
  using Error::Error;
};

/// Factorization breakdown or non-finite intermediate.
class NumericalError : public Error
{
public:
  using Error::Error;
};

/// Flat-to-state map evaluated where the flat velocity vanishes.
class SingularSpeedError : public Error
{
public:
  SingularSpeedError(const std::string & what, double t) : Error(what), t_(t) {}
  double time() const { return t_; }

private:
  double t_;
};

/// Caller broke an API contract (e.g. gradient propagated against a stale solve).
class ContractViolation : public Error
{
public:
  using Error::Error;
};

class InputError : public Error
{
public:
  using Error::Error;
};

class NoPathError : public Error
{
public:
  using Error::Error;
};

class PlanningError : public Error
{
public:
  using Error::Error;
};

class ControllerError : public Error
{
public:
  using Error::Error;
};

}  // namespace flatcar

#endif  // FLATCAR__ERRORS_HPP_
