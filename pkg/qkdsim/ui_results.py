#results table viewer

import logging
from pathlib import Path
from typing import Dict, List

from PySide6.QtWidgets import (
    QMainWindow, QWidget, QVBoxLayout, QLabel, QTableWidget, QTableWidgetItem,
    QStatusBar, QAbstractItemView
)
from PySide6.QtCore import Qt
from PySide6.QtGui import QColor

from .models import QBER_LIMIT
from .persistence import read_results

logger = logging.getLogger(__name__)

INFEASIBLE_COLOR = QColor(110, 40, 40)
ERROR_COLOR = QColor(90, 90, 30)


def row_is_infeasible(row: Dict[str, str]) -> bool:
    try:
        return float(row.get("qber") or 0.0) > QBER_LIMIT
    except ValueError:
        return False


class ResultsWindow(QMainWindow):
    """Read-only view of one result table."""

    def __init__(self, path, parent=None):
        super().__init__(parent)
        self.path = Path(path)
        self.comments, self.rows = read_results(self.path)
        self.setWindowTitle(f"qkdsim - {self.path.name}")
        self.resize(1200, 600)
        self.init_ui()
        self.load_rows(self.rows)

    def init_ui(self):
        central = QWidget()
        layout = QVBoxLayout(central)

        #metadata header

        self.meta_label = QLabel("\n".join(self.comments))
        self.meta_label.setStyleSheet("font-weight: bold;")
        layout.addWidget(self.meta_label)

        self.table = QTableWidget()
        self.table.setEditTriggers(QAbstractItemView.EditTrigger.NoEditTriggers)
        self.table.horizontalHeader().setStretchLastSection(True)
        self.table.setShowGrid(True)
        self.table.setGridStyle(Qt.PenStyle.SolidLine)
        self.table.setAlternatingRowColors(True)
        self.table.verticalHeader().setVisible(False)

        #make column dividers more visible

        self.table.horizontalHeader().setStyleSheet("""
            QHeaderView::section {
                border-right: 2px solid palette(mid);
                background-color: palette(alternateBase);
            }
        """)
        layout.addWidget(self.table)
        self.setCentralWidget(central)

        self.status_bar = QStatusBar()
        self.setStatusBar(self.status_bar)

    def load_rows(self, rows: List[Dict[str, str]]):
        columns = list(rows[0].keys()) if rows else []
        self.table.clear()
        self.table.setColumnCount(len(columns))
        self.table.setHorizontalHeaderLabels(columns)
        self.table.setRowCount(len(rows))

        infeasible = 0
        for r, row in enumerate(rows):
            tint = None
            if row.get("error"):
                tint = ERROR_COLOR
            elif row_is_infeasible(row):
                tint = INFEASIBLE_COLOR
                infeasible += 1
            for c, name in enumerate(columns):
                item = QTableWidgetItem(row.get(name) or "")
                if tint is not None:
                    item.setBackground(tint)
                self.table.setItem(r, c, item)
        self.table.resizeColumnsToContents()
        self.status_bar.showMessage(f"{len(rows)} rows, {infeasible} above QBER {QBER_LIMIT:.0%}")
        logger.debug(f"Viewer loaded {len(rows)} rows from {self.path}")
