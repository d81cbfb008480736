import shutil
import sys

MINIMUM_TERMINAL_WIDTH = 72
BAR_WIDTH = 40


class ProgressBars:
    """One console bar per worker, drawn on stderr.

    stdout is left untouched so that command line artifacts stay
    byte-identical whether bars are shown or not.
    """

    def __init__(self, maxs, stream=None):
        self.__stream = stream if stream is not None else sys.stderr
        self.__bars = [[0, max(total, 1)] for total in maxs]
        self.__width = self.__get_width()
        self.__lines = []

        self.__update_lines()
        self.__stream.write("\n".join(self.__lines))
        self.__stream.flush()

    @staticmethod
    def __get_width():
        try:
            columns = shutil.get_terminal_size().columns
        except (AttributeError, ValueError, OSError):
            return MINIMUM_TERMINAL_WIDTH
        return max(MINIMUM_TERMINAL_WIDTH, columns - 1)

    def __remove_displayed_lines(self):
        if self.__lines:
            self.__stream.write("\b" * len(self.__lines[-1]))

        if len(self.__lines) >= 2:
            self.__stream.write("\033M" * (len(self.__lines) - 1))

        self.__lines = []

    def __update_line(self, done, total):
        percent = done / total
        bar = (":" * int(percent * BAR_WIDTH)).ljust(BAR_WIDTH, " ")
        line = " {percent:6.2f}% {bar:s} | {done:8d} / {total:8d} |".format(
            percent=round(percent * 100, 2), bar=bar, done=done, total=total
        )
        return line[: self.__width].ljust(self.__width, " ")

    def __update_lines(self):
        self.__lines = [self.__update_line(done, total) for done, total in self.__bars]

    def update(self, values):
        """Redraw the bars.

        Positional arguments:
        values - The new number of processed items of each bar
        """
        for index, value in enumerate(values):
            self.__bars[index][0] = min(value, self.__bars[index][1])

        self.__remove_displayed_lines()
        self.__update_lines()

        self.__stream.write("\n".join(self.__lines))
        self.__stream.flush()

    def close(self):
        self.__stream.write("\n")
        self.__stream.flush()
