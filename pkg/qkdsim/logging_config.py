#logging

import logging
import sys
from .persistence import get_log_path


def setup_logging(verbose: bool = False) -> None:
    log_file = get_log_path()

    #create formatter

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    #file handler

    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)

    #console handler, stderr keeps stdout free for tables

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(formatter)

    #root logger

    root_logger = logging.getLogger()
    root_logger.setLevel(logging.DEBUG)
    for handler in list(root_logger.handlers):
        if getattr(handler, "_qkdsim", False):
            root_logger.removeHandler(handler)
            handler.close()
    file_handler._qkdsim = True
    console_handler._qkdsim = True
    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)

    #reduce noise from qt and plotting backends
    logging.getLogger("PySide6").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
