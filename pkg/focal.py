import sys

from dotenv import load_dotenv

# Cargar variables de entorno
load_dotenv()

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
