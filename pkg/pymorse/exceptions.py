class MorseError(Exception):
    """Base class for every exception pymorse raises on purpose"""


class ConfigurationError(MorseError, ValueError):
    """
    Exception raised for invalid sizes, boxes, flags, or config-file lines
    """
    # Like the rest of this module, state lives in self.args so the exception
    # survives a trip through a multiprocessing pipe.

    @property
    def message(self):
        """A string describing what was wrong"""
        return self.args[0]

    @property
    def line(self):
        """The 1-based config-file line the problem is on, or None"""
        return self.args[1] if len(self.args) > 1 else None

    def __str__(self):
        if self.line is not None:
            return 'line %s: %s' % (self.line, self.message)
        return str(self.message)


class ShapeError(MorseError, ValueError):
    """Exception raised when an array's length doesn't match its referent"""

    @property
    def expected(self):
        """The length that was required"""
        return self.args[0]

    @property
    def actual(self):
        """The length that was passed"""
        return self.args[1]

    def __str__(self):
        return 'expected length %s, got %s' % (self.expected, self.actual)


class DomainError(MorseError, ValueError):
    """Exception raised when a landscape is evaluated outside [-1, 1]^2"""

    @property
    def point(self):
        """The offending point"""
        return self.args[0]

    def __str__(self):
        return 'point %r lies outside the landscape domain' % (self.point,)


class NumericError(MorseError, ArithmeticError):
    """
    Exception raised when a computation produces NaN or infinity, or when an
    iterative approximation diverges

    Callers on the outer-loop path catch this and skip the update rather than
    let it escape.
    """


class EpisodeFinishedError(MorseError, RuntimeError):
    """Exception raised when stepping an episode that has already ended"""

    @property
    def state(self):
        """The terminal state that was stepped"""
        return self.args[0]

    def __str__(self):
        return 'cannot step finished episode at %r' % (self.state,)


class ScheduleError(MorseError):
    """
    Exception raised when a training component fails partway through a run

    The original exception is kept so nothing is lost.
    """
    @property
    def epoch(self):
        """The 1-based epoch that was executing"""
        return self.args[0]

    @property
    def error(self):
        """The exception the component raised"""
        return self.args[1]

    def __str__(self):
        return 'epoch %s: %s: %s' % (self.epoch,
                                     type(self.error).__name__,
                                     self.error)


class PersistenceError(MorseError, IOError):
    """Exception raised when run files can't be written or read back"""

    @property
    def path(self):
        """The file or directory involved"""
        return self.args[0]

    @property
    def reason(self):
        """A string error message"""
        return self.args[1]

    def __str__(self):
        return '%s: %s' % (self.path, self.reason)
