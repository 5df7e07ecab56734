# Algorithms, codecs and exceptions
