# Utility functions (logging setup, file IO, seeds, number formatting)
# Shared by the CLI, the demo and the xling modules

import hashlib
import io
import logging
import os
import shutil
import sys
import tempfile
from typing import Iterable, Iterator, List, Optional, Union

from config import Config

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


class StderrHandler(logging.StreamHandler):
    """Stream handler bound to the current sys.stderr rather than the one seen at setup"""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def setup_logger(name: str = 'xling', level: Optional[str] = None,
                 log_file: Optional[str] = None) -> logging.Logger:
    """Configure the named logger once: stderr handler plus optional file handler"""
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, (level or Config.LOG_LEVEL).upper(), logging.INFO))

    if not logger.handlers:
        formatter = logging.Formatter(LOG_FORMAT)
        handler = StderrHandler()
        handler.setFormatter(formatter)
        logger.addHandler(handler)

        log_file = log_file or Config.LOG_FILE
        if log_file:
            file_handler = logging.FileHandler(log_file)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

    return logger


def atomic_write(path: str, data: Union[bytes, str]) -> None:
    """Write to a temp file next to `path`, then move it into place"""
    if isinstance(data, str):
        data = data.encode('utf-8')

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    with tempfile.NamedTemporaryFile('wb', delete=False, dir=directory,
                                     prefix='.tmp-', suffix='.part') as tf:
        tf.write(data)
        tempname = tf.name
    try:
        shutil.move(tempname, path)
    except OSError:
        os.unlink(tempname)
        raise


def read_text_lines(path: str) -> List[str]:
    """Read a UTF-8 file (or standard input for '-') into lines without newlines"""
    if path == '-':
        stream = io.TextIOWrapper(sys.stdin.buffer, encoding='utf-8')
        return stream.read().splitlines()
    with open(path, 'r', encoding='utf-8') as f:
        return f.read().splitlines()


def split_blocks(lines: Iterable[str]) -> Iterator[List[str]]:
    """Group non-blank lines into blocks separated by blank lines"""
    block: List[str] = []
    for line in lines:
        if line.strip():
            block.append(line.strip())
        elif block:
            yield block
            block = []
    if block:
        yield block


def derive_seed(seed: int, component: str) -> int:
    """Child seed for one stochastic component of a run"""
    digest = hashlib.sha256(f'{seed}:{component}'.encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'little')


def format_real(value: float) -> str:
    """Shortest text that parses back to the same double"""
    return repr(float(value))
