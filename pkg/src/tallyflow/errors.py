"""Exception types raised by the algebra and the pipeline engine.

Every condition that aborts an operation is a subclass of TallyError so
callers can catch the whole family at once.  Graph validation problems are
reported as data (see pipeline.Violation), not exceptions.
"""

from __future__ import annotations


class TallyError(Exception):
    """Base class for all errors raised by this package."""


class KindMismatch(TallyError):
    """Fusing monoid elements of different kinds, units or arities."""


class SchemaMismatch(TallyError):
    """A relation or record does not fit the schema an operation requires."""


class UnknownField(TallyError):
    """An operation referenced a field the schema does not declare."""


class UnknownPid(TallyError):
    """A provenance id that no source ever issued."""


class UnknownGroup(TallyError):
    """Drill-down asked for a summary group that does not exist."""


class UntagMissing(TallyError):
    """untag/strip applied to a record with an empty tag stack."""


class MissingTag(TallyError):
    """A tag-dispatching function applied to an untagged record."""


class CollisionAfterRename(TallyError):
    """A rename would map two fields onto the same name."""


class ForbiddenFieldWrite(TallyError):
    """fmap/emap tried to overwrite an existing field."""


class FnNotTotal(TallyError):
    """A mapped function failed to produce a usable value for some record."""


class DomainPredUnsound(TallyError):
    """A totalized function raised inside its claimed domain."""


class JoinColumnMissing(TallyError):
    """A join referenced a column absent from one operand."""


class MissingInput(TallyError):
    """Pipeline execution found a wired port with no upstream value."""


class InvalidGraph(TallyError):
    """run() called on a graph that has validation violations."""


class ExprTypeError(TallyError, TypeError):
    """A relational expression is ill-typed; message carries the node path."""
