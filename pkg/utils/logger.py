import logging
import os
from config import Config


class ShiftLabLogger:
    """Custom logger for the shift laboratory"""

    def __init__(self):
        self.logger = logging.getLogger('shiftlab')
        self.setup_logger()

    def setup_logger(self):
        """Setup logging configuration"""
        log_dir = os.path.dirname(Config.LOG_FILE)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)

        level = getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
        self.logger.setLevel(level)

        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        file_handler = logging.FileHandler(Config.LOG_FILE, encoding='utf-8')
        file_handler.setFormatter(formatter)
        file_handler.setLevel(level)

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        console_handler.setLevel(level)

        if not self.logger.handlers:
            self.logger.addHandler(file_handler)
            self.logger.addHandler(console_handler)

    @staticmethod
    def _tag(message, cell):
        if cell:
            return f"[Cell:{cell}] {message}"
        return message

    def info(self, message, cell=None):
        """Log info message"""
        self.logger.info(self._tag(message, cell))

    def error(self, message, cell=None, error=None):
        """Log error message"""
        message = self._tag(message, cell)
        if error:
            message = f"{message} - Error: {str(error)}"
        self.logger.error(message)

    def warning(self, message, cell=None):
        """Log warning message"""
        self.logger.warning(self._tag(message, cell))

    def debug(self, message, cell=None):
        """Log debug message"""
        self.logger.debug(self._tag(message, cell))

    def log_training_epoch(self, cell, epoch, train_loss, val_loss, lr):
        """Log one training epoch"""
        self.debug(
            f"Epoch {epoch} - train {train_loss:.6g} - val {val_loss:.6g} - lr {lr:.3g}", cell
        )

    def log_cell(self, cell, action, details=None):
        """Log experiment-matrix cell activity"""
        message = f"Cell - Action: {action}"
        if details:
            message += f" - Details: {details}"
        self.info(message, cell)

    def log_test(self, kind, observed, p_value, permutations):
        """Log a permutation test outcome"""
        self.info(
            f"Permutation test - {kind} - observed {observed:.6g} - p {p_value:.4g} - B {permutations}"
        )

    def log_store_operation(self, operation, target, cell=None):
        """Log record-store operations"""
        self.debug(f"Store Operation - {operation} on {target}", cell)


# Global logger instance
logger = ShiftLabLogger()
