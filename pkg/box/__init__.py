from box.timing import Timer
from box import mix
