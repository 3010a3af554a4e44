"""
RunLog utility for collecting and managing log messages during pipeline runs.

This class provides a simple interface to accumulate messages, retrieve summaries, and save logs to a file.
Every entry is also forwarded to the ``efshap`` logger so library users can route it with ``logging``.
"""

import logging
from datetime import datetime
from typing import List, Optional

from src.utils.config import Config

logger = logging.getLogger("efshap")

_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
}


class RunLog:
    """
    General-purpose log container for pipeline runs.

    All instances share one entry list, so a module-level ``run_log = RunLog()``
    in every module feeds the same summary.

    Methods
    -------
    add(message, level="INFO")
        Add a message to the log with an optional level.
    get_summary()
        Get the full log as a single string.
    entries_at(level)
        Get the messages logged at one level.
    clear()
        Clear all log entries.
    save_to_file(filepath=None)
        Append the log to a text file.
    erase(filepath=None)
        Truncate the log file.
    """
    _entries: List[tuple] = []

    def add(self, message, level="INFO"):
        """
        Add a message to the log.

        Parameters
        ----------
        message : str
            The message to add.
        level : str, optional
            The log level ('DEBUG', 'INFO', 'WARNING', 'ERROR'). Default is 'INFO'.
        """
        timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        RunLog._entries.append((level, timestamp, str(message)))
        logger.log(_LEVELS.get(level, logging.INFO), message)

    def get_summary(self):
        """
        Get the full log as a single string.

        Returns
        -------
        str
            The concatenated log entries, separated by newlines.
        """
        return "\n".join(f"[{level}] {timestamp}: {message}" for level, timestamp, message in RunLog._entries)

    def entries_at(self, level):
        """
        Get the messages logged at one level, oldest first.

        Parameters
        ----------
        level : str
            The level to select.

        Returns
        -------
        list of str
        """
        return [message for entry_level, _, message in RunLog._entries if entry_level == level]

    def clear(self):
        """
        Clear all log entries.
        """
        RunLog._entries.clear()

    def save_to_file(self, filepath: Optional[str] = None):
        """
        Append the log to a text file.

        Parameters
        ----------
        filepath : str, optional
            Destination; defaults to the run log path from the configuration.
        """
        filepath = filepath or Config().get_run_log_path()
        with open(filepath, "a", encoding="utf-8") as f:
            f.write("\n")  # Add an empty line before the new log entry
            f.write(self.get_summary())

    def erase(self, filepath: Optional[str] = None):
        """
        Erase the log file.

        Parameters
        ----------
        filepath : str, optional
            The log file to truncate; defaults to the configured path.
        """
        filepath = filepath or Config().get_run_log_path()
        with open(filepath, "w", encoding="utf-8") as f:
            f.write("")
