import sys

from kobayashipy.Lab import main

sys.exit(main())
